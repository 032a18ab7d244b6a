//! Training loop: per step, sample a batch of DGPs from the prior, draw an
//! observational context and randomly-treated queries per DGP, and minimize
//! the histogram form of the causal data-prior loss, averaged over all
//! queries, with an adaptive first-order update and linear warmup.

use crate::autodiff::{forward_grads, ParamStore};
use crate::error::{Error, Result};
use crate::model::{bin_support, build_logits, ContextRow, ModelState, QueryRow, TokenBatch};
use crate::prior::PriorSampler;
use crate::rng::{self};
use crate::stats;
use crate::tensor::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// DGPs per gradient step.
    pub b_t: usize,
    /// Queries per DGP.
    pub b_q: usize,
    pub steps: u64,
    pub learning_rate: f64,
    pub warmup_steps: u64,
    /// Gaussian target width in bin-width units.
    pub sigma_smooth: f64,
    pub seed: u64,
    pub min_context: usize,
    pub max_context: usize,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            b_t: 4,
            b_q: 16,
            steps: 2000,
            learning_rate: 3e-4,
            warmup_steps: 200,
            sigma_smooth: 0.5,
            seed: 0,
            min_context: 8,
            max_context: 256,
            checkpoint_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b_t == 0 || self.b_q == 0 {
            return Err(Error::arg("b_t/b_q: batch sizes must be positive"));
        }
        if !(self.sigma_smooth > 0.0) {
            return Err(Error::arg("sigma_smooth: must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::arg("learning_rate: must be positive"));
        }
        if self.min_context < 1 || self.min_context > self.max_context {
            return Err(Error::arg("context length range is empty"));
        }
        Ok(())
    }

    fn lr_at(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 {
            self.learning_rate
        } else {
            let ramp = ((step + 1) as f64 / self.warmup_steps as f64).min(1.0);
            self.learning_rate * ramp
        }
    }
}

/// Bin-integrated Gaussian target: probability mass of N(mu, sigma^2) per
/// bin, with out-of-support mass folded into the boundary bins, renormalized.
pub fn gaussian_bin_targets(mu: f64, sigma: f64, edges: &[f64]) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::arg("gaussian_bin_targets: sigma must be positive"));
    }
    let l = edges.len() - 1;
    let mut probs = Vec::with_capacity(l);
    for i in 0..l {
        let hi = stats::normal_cdf((edges[i + 1] - mu) / sigma);
        let lo = stats::normal_cdf((edges[i] - mu) / sigma);
        probs.push((hi - lo).max(0.0));
    }
    probs[0] += stats::normal_cdf((edges[0] - mu) / sigma);
    probs[l - 1] += 1.0 - stats::normal_cdf((edges[l] - mu) / sigma);
    let sum: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= sum;
    }
    Ok(probs)
}

/// -sum_l N[l] log q[l].
pub fn histogram_loss(target: &[f64], predicted: &[f64]) -> Result<f64> {
    if target.len() != predicted.len() {
        return Err(Error::arg("histogram_loss: length mismatch"));
    }
    let mut acc = 0.0;
    for (&n, &q) in target.iter().zip(predicted) {
        if n > 0.0 {
            if q <= 0.0 {
                return Err(Error::numeric(
                    "histogram_loss",
                    "predicted probability 0 under positive target mass",
                ));
            }
            acc -= n * q.ln();
        }
    }
    Ok(acc)
}

pub fn entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Adam with bias correction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

impl Adam {
    pub fn update(&mut self, store: &mut ParamStore, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        let names: Vec<String> = store.names().cloned().collect();
        for name in names {
            let g = store.grad(&name).clone();
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape().to_vec()));
            for (mv, &gv) in m.data_mut().iter_mut().zip(g.data()) {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
            }
            let m = m.clone();
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape().to_vec()));
            for (vv, &gv) in v.data_mut().iter_mut().zip(g.data()) {
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
            }
            let v = v.clone();
            let p = store.get_mut(&name);
            for ((pv, &mv), &vv) in p.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
                let mhat = mv / c1;
                let vhat = vv / c2;
                *pv -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// One DGP's contribution to a training step: a token batch plus the true
/// CEPO for every query.
#[derive(Clone, Debug)]
pub struct DgpExample {
    pub dgp_index: usize,
    pub batch: TokenBatch,
    pub target_mu: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainBatch {
    pub examples: Vec<DgpExample>,
    pub context_len: usize,
}

/// Deterministically assemble the step's batch from (config.seed, step).
pub fn sample_train_batch(
    sampler: &dyn PriorSampler,
    cfg: &TrainConfig,
    step: u64,
) -> Result<TrainBatch> {
    let base = rng::split(cfg.seed, step);
    let mut srng = rng::substream(base, 0);
    let context_len = srng.gen_range(cfg.min_context..=cfg.max_context);
    let mut examples = Vec::with_capacity(cfg.b_t);
    for i in 0..cfg.b_t {
        let dgp_seed = rng::split(base, 1 + i as u64);
        let instance = sampler.sample(context_len + cfg.b_q, dgp_seed)?;
        let mut qrng = rng::substream(dgp_seed, 77);
        let context: Vec<ContextRow> = (0..context_len)
            .map(|r| ContextRow {
                t: instance.treatment[r],
                x: instance.covariate_row(r).to_vec(),
                y: instance.outcome[r],
            })
            .collect();
        let mut queries = Vec::with_capacity(cfg.b_q);
        let mut target_mu = Vec::with_capacity(cfg.b_q);
        for r in context_len..context_len + cfg.b_q {
            let t: u8 = qrng.gen_range(0..2);
            queries.push(QueryRow {
                t,
                x: instance.covariate_row(r).to_vec(),
            });
            target_mu.push(if t == 1 { instance.mu1[r] } else { instance.mu0[r] });
        }
        examples.push(DgpExample {
            dgp_index: i,
            batch: TokenBatch { context, queries },
            target_mu,
        });
    }
    Ok(TrainBatch {
        examples,
        context_len,
    })
}

/// Loss and parameter gradients for a single DGP example, scaled by `scale`.
fn example_grads(
    state: &ModelState,
    example: &DgpExample,
    sigma_smooth: f64,
    scale: f64,
) -> Result<(f64, BTreeMap<String, Tensor>)> {
    let cfg = &state.config;
    let (_, _, edges) = bin_support(&example.batch.context_outcomes(), cfg);
    let bin_width = edges[1] - edges[0];
    let sigma = sigma_smooth * bin_width;
    let n_q = example.batch.queries.len();
    let l = cfg.n_bins;
    let mut targets = Vec::with_capacity(n_q * l);
    for &mu in &example.target_mu {
        targets.extend(gaussian_bin_targets(mu, sigma, &edges)?);
    }
    let target_tensor = Tensor::new(vec![n_q, l], targets)?;

    forward_grads(&state.params, |g, store| {
        let (logits, _, _, _) = build_logits(g, store, &example.batch, cfg)?;
        let probs = g.softmax_rows(logits, cfg.theta_t, None)?;
        let logq = g.log(probs)?;
        let tgt = g.constant(target_tensor.clone())?;
        let weighted = g.mul(logq, tgt)?;
        let total = g.sum_all(weighted)?;
        g.scale(total, -scale)
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub context_len: usize,
}

/// Model plus optimizer plus progress; checkpointing this struct and resuming
/// reproduces an uninterrupted run bit for bit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trainer {
    pub model: ModelState,
    pub optimizer: Adam,
    pub steps_done: u64,
}

impl Trainer {
    pub fn new(model: ModelState) -> Self {
        Trainer {
            model,
            optimizer: Adam::default(),
            steps_done: 0,
        }
    }

    /// Accumulate gradients over the batch (in dgp_index order, regardless of
    /// worker scheduling) and apply one optimizer update.
    pub fn apply_batch(
        &mut self,
        batch: &TrainBatch,
        cfg: &TrainConfig,
        workers: usize,
    ) -> Result<f64> {
        let scale = 1.0 / (cfg.b_t * cfg.b_q) as f64;
        let mut ordered: Vec<&DgpExample> = batch.examples.iter().collect();
        ordered.sort_by_key(|e| e.dgp_index);

        let results: Vec<Result<(f64, BTreeMap<String, Tensor>)>> = if workers > 1 {
            use rayon::prelude::*;
            let state = &self.model;
            ordered
                .par_iter()
                .map(|ex| example_grads(state, ex, cfg.sigma_smooth, scale))
                .collect()
        } else {
            ordered
                .iter()
                .map(|ex| example_grads(&self.model, ex, cfg.sigma_smooth, scale))
                .collect()
        };

        self.model.params.zero_grads();
        let mut loss = 0.0;
        for r in results {
            let (l, grads) = r?;
            loss += l;
            for (name, g) in &grads {
                self.model.params.accumulate_grad(name, g);
            }
        }
        if !loss.is_finite() {
            return Err(Error::numeric("train_step", format!("loss = {loss}")));
        }
        let lr = cfg.lr_at(self.steps_done);
        self.optimizer.update(&mut self.model.params, lr);
        Ok(loss)
    }

    /// One full training step: sample the batch for `steps_done`, update, and
    /// report the trace row.
    pub fn step(
        &mut self,
        sampler: &dyn PriorSampler,
        cfg: &TrainConfig,
        workers: usize,
    ) -> Result<TraceRow> {
        let step = self.steps_done;
        let batch = sample_train_batch(sampler, cfg, step)?;
        let lr = cfg.lr_at(step);
        let loss = self.apply_batch(&batch, cfg, workers)?;
        self.steps_done += 1;
        Ok(TraceRow {
            step,
            loss,
            lr,
            context_len: batch.context_len,
        })
    }

    /// Run until `cfg.steps`, invoking `per_step` after every step (trace
    /// sinks and checkpoint writers hook in here).
    pub fn run(
        &mut self,
        sampler: &dyn PriorSampler,
        cfg: &TrainConfig,
        workers: usize,
        mut per_step: impl FnMut(&Trainer, &TraceRow) -> Result<()>,
    ) -> Result<Vec<TraceRow>> {
        cfg.validate()?;
        let mut trace = Vec::new();
        while self.steps_done < cfg.steps {
            let row = self.step(sampler, cfg, workers)?;
            per_step(self, &row)?;
            trace.push(row);
        }
        Ok(trace)
    }
}

/// Train a fresh model to completion; returns the trainer and the loss trace.
pub fn train(
    model: ModelState,
    cfg: &TrainConfig,
    sampler: &dyn PriorSampler,
    workers: usize,
) -> Result<(Trainer, Vec<TraceRow>)> {
    let mut trainer = Trainer::new(model);
    let trace = trainer.run(sampler, cfg, workers, |_, _| Ok(()))?;
    Ok((trainer, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::prior::SinusoidalPrior;

    fn tiny_model(seed: u64) -> ModelState {
        ModelState::init(
            ModelConfig {
                n_layers: 1,
                d_model: 8,
                n_heads: 2,
                n_bins: 8,
                max_features: 12,
                base_support: (-10.0, 10.0),
                theta_t: 1.0,
            },
            seed,
        )
        .unwrap()
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            b_t: 2,
            b_q: 3,
            steps: 2,
            learning_rate: 1e-3,
            warmup_steps: 2,
            sigma_smooth: 0.5,
            seed: 5,
            min_context: 4,
            max_context: 8,
            checkpoint_every: 1,
        }
    }

    #[test]
    fn targets_concentrate_on_containing_bin() {
        let edges: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let n = gaussian_bin_targets(3.5, 1.0 / 100.0, &edges).unwrap();
        assert!(n[3] > 0.999);
        let sum: f64 = n.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn targets_split_evenly_on_shared_edge() {
        let edges: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let n = gaussian_bin_targets(4.0, 0.01, &edges).unwrap();
        assert!((n[3] - 0.5).abs() < 1e-6);
        assert!((n[4] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn targets_match_quadrature() {
        // independent oracle: midpoint-rule integration of the N(1.5, 0.5^2)
        // density over each bin, tails folded into the boundary bins
        let edges = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let (mu, sigma) = (1.5, 0.5);
        let n = gaussian_bin_targets(mu, sigma, &edges).unwrap();
        let pdf = |x: f64| {
            (-0.5 * ((x - mu) / sigma).powi(2)).exp()
                / (sigma * (2.0 * std::f64::consts::PI).sqrt())
        };
        let integrate = |lo: f64, hi: f64| {
            let steps = 200_000;
            let h = (hi - lo) / steps as f64;
            (0..steps).map(|i| pdf(lo + (i as f64 + 0.5) * h)).sum::<f64>() * h
        };
        let mut expected: Vec<f64> = (0..4).map(|i| integrate(edges[i], edges[i + 1])).collect();
        expected[0] += integrate(mu - 40.0 * sigma, edges[0]);
        expected[3] += integrate(edges[4], mu + 40.0 * sigma);
        let total: f64 = expected.iter().sum();
        for e in expected.iter_mut() {
            *e /= total;
        }
        for (got, want) in n.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn targets_clip_out_of_support_mu_to_boundary() {
        let edges = vec![0.0, 1.0, 2.0];
        let n = gaussian_bin_targets(50.0, 0.3, &edges).unwrap();
        assert!(n[1] > 0.999999);
        let n = gaussian_bin_targets(-50.0, 0.3, &edges).unwrap();
        assert!(n[0] > 0.999999);
    }

    #[test]
    fn loss_against_uniform_prediction_is_log_l() {
        let q = vec![0.25; 4];
        for n in [
            vec![0.1, 0.7, 0.1, 0.1],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.25, 0.25, 0.25, 0.25],
        ] {
            let loss = histogram_loss(&n, &q).unwrap();
            assert!((loss - 4.0f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_of_one_hot_target() {
        let q = vec![0.1, 0.2, 0.3, 0.4];
        let n = vec![0.0, 0.0, 1.0, 0.0];
        assert!((histogram_loss(&n, &q).unwrap() + 0.3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_rejects_zero_prediction_with_mass() {
        let q = vec![0.0, 1.0];
        let n = vec![0.5, 0.5];
        assert!(matches!(
            histogram_loss(&n, &q),
            Err(Error::Numeric { .. })
        ));
    }

    #[test]
    fn loss_dominates_entropy() {
        let mut rng = rng::stream(3);
        for _ in 0..500 {
            let l = rng.gen_range(2..12usize);
            let raw_n: Vec<f64> = (0..l).map(|_| rng.gen_range(0.0..1.0)).collect();
            let sum_n: f64 = raw_n.iter().sum();
            let n: Vec<f64> = raw_n.iter().map(|v| v / sum_n).collect();
            let raw_q: Vec<f64> = (0..l).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let q = crate::autodiff::softmax_t(&raw_q, 1.0).unwrap();
            let loss = histogram_loss(&n, &q).unwrap();
            assert!(loss >= entropy(&n) - 1e-12);
        }
    }

    #[test]
    fn single_example_step_loss_is_that_querys_histogram_loss() {
        let state = tiny_model(1);
        let mut cfg = tiny_cfg();
        cfg.b_t = 1;
        cfg.b_q = 1;
        let sampler = SinusoidalPrior { omega_lo: 0.0, omega_hi: 0.0 };
        let batch = sample_train_batch(&sampler, &cfg, 0).unwrap();
        let ex = &batch.examples[0];

        // independent recompute of the single query's loss
        let ppds = crate::model::forward(&state, &ex.batch).unwrap();
        let (_, _, edges) = bin_support(&ex.batch.context_outcomes(), &state.config);
        let sigma = cfg.sigma_smooth * (edges[1] - edges[0]);
        let target = gaussian_bin_targets(ex.target_mu[0], sigma, &edges).unwrap();
        let expected = histogram_loss(&target, &ppds[0].probs).unwrap();

        let mut trainer = Trainer::new(state);
        let loss = trainer.apply_batch(&batch, &cfg, 1).unwrap();
        assert!((loss - expected).abs() < 1e-10, "{loss} vs {expected}");
    }

    #[test]
    fn steps_are_deterministic() {
        let cfg = tiny_cfg();
        let sampler = SinusoidalPrior { omega_lo: 0.0, omega_hi: 0.0 };
        let mut a = Trainer::new(tiny_model(2));
        let mut b = Trainer::new(tiny_model(2));
        let ra = a.step(&sampler, &cfg, 1).unwrap();
        let rb = b.step(&sampler, &cfg, 1).unwrap();
        assert_eq!(ra.loss, rb.loss);
        for name in a.model.params.names() {
            assert_eq!(a.model.params.get(name), b.model.params.get(name));
        }
    }

    #[test]
    fn workers_do_not_change_results() {
        let cfg = tiny_cfg();
        let sampler = SinusoidalPrior { omega_lo: 0.0, omega_hi: 0.0 };
        let mut serial = Trainer::new(tiny_model(2));
        let mut parallel = Trainer::new(tiny_model(2));
        for _ in 0..2 {
            let rs = serial.step(&sampler, &cfg, 1).unwrap();
            let rp = parallel.step(&sampler, &cfg, 4).unwrap();
            assert_eq!(rs.loss, rp.loss);
        }
        for name in serial.model.params.names() {
            assert_eq!(serial.model.params.get(name), parallel.model.params.get(name));
        }
    }

    #[test]
    fn loss_invariant_to_example_order() {
        let cfg = tiny_cfg();
        let sampler = SinusoidalPrior { omega_lo: 0.0, omega_hi: 0.0 };
        let batch = sample_train_batch(&sampler, &cfg, 0).unwrap();
        let mut reversed = batch.clone();
        reversed.examples.reverse();
        let mut a = Trainer::new(tiny_model(2));
        let mut b = Trainer::new(tiny_model(2));
        let la = a.apply_batch(&batch, &cfg, 1).unwrap();
        let lb = b.apply_batch(&reversed, &cfg, 1).unwrap();
        assert_eq!(la, lb);
        for name in a.model.params.names() {
            assert_eq!(a.model.params.get(name), b.model.params.get(name));
        }
    }

    #[test]
    fn zero_steps_leaves_state_unchanged() {
        let mut cfg = tiny_cfg();
        cfg.steps = 0;
        let sampler = SinusoidalPrior { omega_lo: 0.0, omega_hi: 0.0 };
        let model = tiny_model(2);
        let before = model.params.clone();
        let (trainer, trace) = train(model, &cfg, &sampler, 1).unwrap();
        assert!(trace.is_empty());
        for name in before.names() {
            assert_eq!(before.get(name), trainer.model.params.get(name));
        }
    }

    #[test]
    fn resume_from_checkpoint_is_bit_exact() {
        let mut cfg = tiny_cfg();
        cfg.steps = 4;
        let sampler = SinusoidalPrior { omega_lo: 0.0, omega_hi: 0.0 };

        let (full, _) = train(tiny_model(9), &cfg, &sampler, 1).unwrap();

        let mut half = Trainer::new(tiny_model(9));
        let mut cfg_half = cfg.clone();
        cfg_half.steps = 2;
        half.run(&sampler, &cfg_half, 1, |_, _| Ok(())).unwrap();
        // serialize/deserialize the trainer and continue
        let blob = serde_json::to_string(&half).unwrap();
        let mut resumed: Trainer = serde_json::from_str(&blob).unwrap();
        resumed.model.params.ensure_grad_slots();
        resumed.run(&sampler, &cfg, 1, |_, _| Ok(())).unwrap();

        assert_eq!(resumed.steps_done, full.steps_done);
        for name in full.model.params.names() {
            assert_eq!(full.model.params.get(name), resumed.model.params.get(name));
        }
    }
}
