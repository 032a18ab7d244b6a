//! Turning predicted CEPO histograms into point estimates, credible
//! intervals, and CATE/ATE estimates. Contexts larger than the model window
//! are served through weak-CATE retrieval windowing: rank rows with a
//! boosted-stump regressor and match each query batch to the contiguous
//! context window whose weak-CATE range fits best.

use crate::error::{Error, Result};
use crate::model::{forward, ModelState, QuantizedPpd, QueryRow, TokenBatch};
use crate::prior::ObservationalTable;
use crate::rng::{self, StreamRng};
use crate::stats;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Point estimate with an equal-tailed credible interval at significance
/// alpha, derived from `n_samples` draws.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub point: f64,
    pub interval: (f64, f64),
    pub alpha: f64,
    pub n_samples: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct EstimateOptions {
    pub alpha: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub max_context: usize,
    pub workers: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            alpha: 0.05,
            n_samples: 10_000,
            seed: 0,
            max_context: 512,
            workers: 1,
        }
    }
}

/// Expectation of a quantized PPD: sum of prob * bin center.
pub fn ppd_mean(ppd: &QuantizedPpd) -> f64 {
    ppd.probs
        .iter()
        .enumerate()
        .map(|(l, &p)| p * ppd.bin_center(l))
        .sum()
}

/// Draw from the histogram: categorical bin, uniform position within it.
pub fn sample_ppd(ppd: &QuantizedPpd, rng: &mut StreamRng, n: usize) -> Vec<f64> {
    let l = ppd.probs.len();
    let mut cdf = Vec::with_capacity(l);
    let mut acc = 0.0;
    for &p in &ppd.probs {
        acc += p;
        cdf.push(acc);
    }
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen_range(0.0..1.0) * acc;
            let bin = cdf.partition_point(|&c| c < u).min(l - 1);
            let frac: f64 = rng.gen_range(0.0..1.0);
            ppd.edges[bin] + frac * (ppd.edges[bin + 1] - ppd.edges[bin])
        })
        .collect()
}

fn equal_tailed(draws: &mut [f64], alpha: f64) -> (f64, f64) {
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (
        stats::quantile_sorted(draws, alpha / 2.0),
        stats::quantile_sorted(draws, 1.0 - alpha / 2.0),
    )
}

/// Equal-tailed (alpha/2, 1 - alpha/2) interval from `n_samples` draws.
pub fn credible_interval(
    ppd: &QuantizedPpd,
    alpha: f64,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::arg("credible_interval: alpha outside (0,1)"));
    }
    let mut rng = rng::stream(seed);
    let mut draws = sample_ppd(ppd, &mut rng, n_samples);
    Ok(equal_tailed(&mut draws, alpha))
}

/// Predicted CEPO-PPD for each query, windowing the context when it exceeds
/// `max_context`. Outputs are in query input order.
pub fn query_ppds(
    state: &ModelState,
    table: &ObservationalTable,
    queries: &[QueryRow],
    opts: &EstimateOptions,
) -> Result<Vec<QuantizedPpd>> {
    table.validate()?;
    if queries.is_empty() {
        return Err(Error::arg("query_ppds: no queries"));
    }
    let windows = retrieval_windows(
        table,
        &queries.iter().map(|q| q.x.clone()).collect::<Vec<_>>(),
        opts.max_context,
    )?;

    // chunk each window's queries to bound graph size
    const CHUNK: usize = 128;
    struct Job {
        context_rows: Vec<usize>,
        query_ids: Vec<usize>,
    }
    let mut jobs = Vec::new();
    for w in &windows {
        for chunk in w.query_ids.chunks(CHUNK) {
            jobs.push(Job {
                context_rows: w.context_rows.clone(),
                query_ids: chunk.to_vec(),
            });
        }
    }

    let run_job = |job: &Job| -> Result<Vec<(usize, QuantizedPpd)>> {
        let ctx_table = table.subset(&job.context_rows);
        let qrows: Vec<QueryRow> = job.query_ids.iter().map(|&i| queries[i].clone()).collect();
        let batch = TokenBatch::from_table(&ctx_table, qrows)?;
        let ppds = forward(state, &batch)?;
        Ok(job.query_ids.iter().cloned().zip(ppds).collect())
    };

    let results: Vec<Result<Vec<(usize, QuantizedPpd)>>> = if opts.workers > 1 {
        use rayon::prelude::*;
        jobs.par_iter().map(run_job).collect()
    } else {
        jobs.iter().map(run_job).collect()
    };

    let mut out: Vec<Option<QuantizedPpd>> = vec![None; queries.len()];
    for r in results {
        for (i, ppd) in r? {
            out[i] = Some(ppd);
        }
    }
    Ok(out.into_iter().map(|p| p.expect("window cover")).collect())
}

/// The (t=0, t=1) PPD pair per query covariate vector, in input order.
pub fn cate_ppds(
    state: &ModelState,
    table: &ObservationalTable,
    queries: &[Vec<f64>],
    opts: &EstimateOptions,
) -> Result<Vec<(QuantizedPpd, QuantizedPpd)>> {
    let mut rows = Vec::with_capacity(queries.len() * 2);
    for x in queries {
        rows.push(QueryRow { t: 0, x: x.clone() });
        rows.push(QueryRow { t: 1, x: x.clone() });
    }
    let ppds = query_ppds(state, table, &rows, opts)?;
    Ok(ppds
        .chunks(2)
        .map(|pair| (pair[0].clone(), pair[1].clone()))
        .collect())
}

fn cate_estimate_from_pair(
    ppd0: &QuantizedPpd,
    ppd1: &QuantizedPpd,
    opts: &EstimateOptions,
    draw_seed: u64,
) -> EffectEstimate {
    let point = ppd_mean(ppd1) - ppd_mean(ppd0);
    let mut rng1 = rng::substream(draw_seed, 1);
    let mut rng0 = rng::substream(draw_seed, 0);
    let d1 = sample_ppd(ppd1, &mut rng1, opts.n_samples);
    let d0 = sample_ppd(ppd0, &mut rng0, opts.n_samples);
    let mut diffs: Vec<f64> = d1.iter().zip(&d0).map(|(&a, &b)| a - b).collect();
    let interval = equal_tailed(&mut diffs, opts.alpha);
    EffectEstimate {
        point,
        interval,
        alpha: opts.alpha,
        n_samples: opts.n_samples,
    }
}

/// CATE estimate at a single query point.
pub fn estimate_cate(
    state: &ModelState,
    table: &ObservationalTable,
    query_x: &[f64],
    opts: &EstimateOptions,
) -> Result<EffectEstimate> {
    let pairs = cate_ppds(state, table, &[query_x.to_vec()], opts)?;
    Ok(cate_estimate_from_pair(
        &pairs[0].0,
        &pairs[0].1,
        opts,
        rng::split(opts.seed, 0),
    ))
}

/// CATE estimates for a batch of query points, in input order.
pub fn estimate_cates(
    state: &ModelState,
    table: &ObservationalTable,
    queries: &[Vec<f64>],
    opts: &EstimateOptions,
) -> Result<Vec<EffectEstimate>> {
    let pairs = cate_ppds(state, table, queries, opts)?;
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(i, (p0, p1))| {
            cate_estimate_from_pair(p0, p1, opts, rng::split(opts.seed, i as u64))
        })
        .collect())
}

/// ATE as the average of per-unit CATE estimates over the context units;
/// the interval averages per-unit paired draws before taking quantiles.
pub fn estimate_ate(
    state: &ModelState,
    table: &ObservationalTable,
    opts: &EstimateOptions,
) -> Result<EffectEstimate> {
    let queries: Vec<Vec<f64>> = (0..table.n()).map(|i| table.x_row(i).to_vec()).collect();
    let pairs = cate_ppds(state, table, &queries, opts)?;
    Ok(ate_from_pairs(&pairs, opts))
}

fn ate_from_pairs(pairs: &[(QuantizedPpd, QuantizedPpd)], opts: &EstimateOptions) -> EffectEstimate {
    let n = pairs.len() as f64;
    let point = pairs
        .iter()
        .map(|(p0, p1)| ppd_mean(p1) - ppd_mean(p0))
        .sum::<f64>()
        / n;
    let mut acc = vec![0.0; opts.n_samples];
    for (i, (p0, p1)) in pairs.iter().enumerate() {
        let draw_seed = rng::split(opts.seed, i as u64);
        let mut rng1 = rng::substream(draw_seed, 1);
        let mut rng0 = rng::substream(draw_seed, 0);
        let d1 = sample_ppd(p1, &mut rng1, opts.n_samples);
        let d0 = sample_ppd(p0, &mut rng0, opts.n_samples);
        for (a, (&x1, &x0)) in acc.iter_mut().zip(d1.iter().zip(&d0)) {
            *a += x1 - x0;
        }
    }
    for a in acc.iter_mut() {
        *a /= n;
    }
    let interval = equal_tailed(&mut acc, opts.alpha);
    EffectEstimate {
        point,
        interval,
        alpha: opts.alpha,
        n_samples: opts.n_samples,
    }
}

/// Per-row CATE estimates plus the ATE over one table, sharing a single set
/// of forward passes. Matches `estimate_cates` + `estimate_ate` exactly.
pub fn estimate_table(
    state: &ModelState,
    table: &ObservationalTable,
    opts: &EstimateOptions,
) -> Result<(Vec<EffectEstimate>, EffectEstimate)> {
    let queries: Vec<Vec<f64>> = (0..table.n()).map(|i| table.x_row(i).to_vec()).collect();
    let pairs = cate_ppds(state, table, &queries, opts)?;
    let cates = pairs
        .iter()
        .enumerate()
        .map(|(i, (p0, p1))| cate_estimate_from_pair(p0, p1, opts, rng::split(opts.seed, i as u64)))
        .collect();
    let ate = ate_from_pairs(&pairs, opts);
    Ok((cates, ate))
}

// ---------------------------------------------------------------------------
// weak CATE: gradient-boosted stumps of y on (t, x)
// ---------------------------------------------------------------------------

const BOOST_ROUNDS: usize = 50;
const BOOST_LEARNING_RATE: f64 = 0.1;

#[derive(Clone, Debug)]
struct Stump {
    feature: usize,
    threshold: f64,
    left_value: f64,
    right_value: f64,
}

impl Stump {
    fn predict(&self, features: &[f64]) -> f64 {
        if features[self.feature] <= self.threshold {
            self.left_value
        } else {
            self.right_value
        }
    }
}

/// Squared-loss boosted stumps regressing y on (t, x); the weak CATE is the
/// difference of predictions under t = 1 and t = 0.
#[derive(Clone, Debug)]
pub struct WeakCateModel {
    base: f64,
    stumps: Vec<Stump>,
}

impl WeakCateModel {
    pub fn fit(table: &ObservationalTable) -> Result<Self> {
        if table.n() < 10 {
            return Err(Error::Estimation(
                "weak_cate: need at least 10 rows".into(),
            ));
        }
        if !table.has_both_arms() {
            return Err(Error::Estimation(
                "weak_cate: both treatment arms required".into(),
            ));
        }
        let n = table.n();
        let d = table.n_covariates + 1; // treatment is feature 0
        let feature = |i: usize, j: usize| -> f64 {
            if j == 0 {
                table.t[i] as f64
            } else {
                table.x[i * table.n_covariates + (j - 1)]
            }
        };
        // presort row indices per feature
        let mut sorted: Vec<Vec<usize>> = Vec::with_capacity(d);
        for j in 0..d {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| feature(a, j).partial_cmp(&feature(b, j)).unwrap());
            sorted.push(idx);
        }

        let base = stats::mean(&table.y);
        let mut pred = vec![base; n];
        let mut stumps = Vec::with_capacity(BOOST_ROUNDS);
        for _ in 0..BOOST_ROUNDS {
            let resid: Vec<f64> = (0..n).map(|i| table.y[i] - pred[i]).collect();
            let total: f64 = resid.iter().sum();
            let mut best: Option<(f64, Stump)> = None;
            for j in 0..d {
                let idx = &sorted[j];
                let mut left_sum = 0.0;
                for k in 0..n - 1 {
                    left_sum += resid[idx[k]];
                    let (a, b) = (feature(idx[k], j), feature(idx[k + 1], j));
                    if a == b {
                        continue;
                    }
                    let n_l = (k + 1) as f64;
                    let n_r = (n - k - 1) as f64;
                    let right_sum = total - left_sum;
                    // SSE reduction of the two-mean fit
                    let gain = left_sum * left_sum / n_l + right_sum * right_sum / n_r;
                    if best.as_ref().map_or(true, |(g, _)| gain > *g) {
                        best = Some((
                            gain,
                            Stump {
                                feature: j,
                                threshold: 0.5 * (a + b),
                                left_value: left_sum / n_l,
                                right_value: right_sum / n_r,
                            },
                        ));
                    }
                }
            }
            let Some((_, stump)) = best else { break };
            for i in 0..n {
                let f: Vec<f64> = (0..d).map(|j| feature(i, j)).collect();
                pred[i] += BOOST_LEARNING_RATE * stump.predict(&f);
            }
            stumps.push(stump);
        }
        Ok(WeakCateModel { base, stumps })
    }

    pub fn predict(&self, t: u8, x: &[f64]) -> f64 {
        let mut features = Vec::with_capacity(x.len() + 1);
        features.push(t as f64);
        features.extend_from_slice(x);
        self.base
            + self
                .stumps
                .iter()
                .map(|s| BOOST_LEARNING_RATE * s.predict(&features))
                .sum::<f64>()
    }

    pub fn predict_tau(&self, x: &[f64]) -> f64 {
        self.predict(1, x) - self.predict(0, x)
    }
}

/// Per-row weak CATE estimates for the table.
pub fn weak_cate(table: &ObservationalTable) -> Result<Vec<f64>> {
    let model = WeakCateModel::fit(table)?;
    Ok((0..table.n())
        .map(|i| model.predict_tau(table.x_row(i)))
        .collect())
}

/// One retrieval window: the context rows serving a batch of queries.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalWindow {
    pub query_ids: Vec<usize>,
    pub context_rows: Vec<usize>,
}

/// Assign every query to exactly one context window of length at most
/// `max_ctx`. Small contexts pass through; large ones are sorted by weak
/// CATE together with the queries, queries are cut into consecutive batches,
/// and each batch gets the contiguous window whose weak-CATE range matches
/// best (bisection over the two window endpoints).
pub fn retrieval_windows(
    table: &ObservationalTable,
    queries: &[Vec<f64>],
    max_ctx: usize,
) -> Result<Vec<RetrievalWindow>> {
    if max_ctx < 2 {
        return Err(Error::arg("retrieval_windows: max_ctx must be at least 2"));
    }
    let n = table.n();
    if n <= max_ctx {
        return Ok(vec![RetrievalWindow {
            query_ids: (0..queries.len()).collect(),
            context_rows: (0..n).collect(),
        }]);
    }

    let model = WeakCateModel::fit(table)?;
    let tau_ctx: Vec<f64> = (0..n).map(|i| model.predict_tau(table.x_row(i))).collect();
    let tau_q: Vec<f64> = queries.iter().map(|x| model.predict_tau(x)).collect();

    let mut ctx_order: Vec<usize> = (0..n).collect();
    ctx_order.sort_by(|&a, &b| tau_ctx[a].partial_cmp(&tau_ctx[b]).unwrap());
    let sorted_tau: Vec<f64> = ctx_order.iter().map(|&i| tau_ctx[i]).collect();

    let mut q_order: Vec<usize> = (0..queries.len()).collect();
    q_order.sort_by(|&a, &b| tau_q[a].partial_cmp(&tau_q[b]).unwrap());

    let batch_size = (max_ctx / 8).max(1);
    let mut windows = Vec::new();
    for chunk in q_order.chunks(batch_size) {
        let lo = tau_q[chunk[0]];
        let hi = tau_q[*chunk.last().unwrap()];
        let start = best_window_start(&sorted_tau, max_ctx, lo, hi);
        windows.push(RetrievalWindow {
            query_ids: chunk.to_vec(),
            context_rows: ctx_order[start..start + max_ctx].to_vec(),
        });
    }
    Ok(windows)
}

/// Objective for window start i: |v[i] - lo| + |v[i+w-1] - hi|.
fn window_cost(v: &[f64], w: usize, i: usize, lo: f64, hi: f64) -> f64 {
    (v[i] - lo).abs() + (v[i + w - 1] - hi).abs()
}

/// First argmin of the window cost. Both terms are monotone-valley functions
/// of the start index, so the minimum lies between their two switch points;
/// bisect for the switch points, scan the bracket, then walk left over the
/// flat stretch to match the first global argmin.
pub fn best_window_start(v: &[f64], w: usize, lo: f64, hi: f64) -> usize {
    let last = v.len() - w; // inclusive
    let s1 = v[..=last].partition_point(|&t| t < lo).min(last);
    let s2 = v[w - 1..].partition_point(|&t| t < hi).min(last);
    // each |.| term bottoms out at its crossing index or one before it, so
    // the scan bracket starts one left of the earlier switch point
    let (a, b) = (s1.min(s2).saturating_sub(1), s1.max(s2));
    let mut best = a;
    let mut best_cost = window_cost(v, w, a, lo, hi);
    for i in a + 1..=b {
        let c = window_cost(v, w, i, lo, hi);
        if c < best_cost {
            best = i;
            best_cost = c;
        }
    }
    while best > 0 && window_cost(v, w, best - 1, lo, hi) == best_cost {
        best -= 1;
    }
    best
}

/// Exhaustive-scan reference for the window search (first argmin).
pub fn best_window_start_exhaustive(v: &[f64], w: usize, lo: f64, hi: f64) -> usize {
    let last = v.len() - w;
    let mut best = 0;
    let mut best_cost = window_cost(v, w, 0, lo, hi);
    for i in 1..=last {
        let c = window_cost(v, w, i, lo, hi);
        if c < best_cost {
            best = i;
            best_cost = c;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn uniform_ppd(lo: f64, hi: f64, l: usize) -> QuantizedPpd {
        let mut edges = Vec::with_capacity(l + 1);
        for j in 0..=l {
            edges.push(lo + (hi - lo) * j as f64 / l as f64);
        }
        QuantizedPpd {
            support: (lo, hi),
            edges,
            probs: vec![1.0 / l as f64; l],
        }
    }

    fn point_mass_ppd(lo: f64, hi: f64, l: usize, bin: usize) -> QuantizedPpd {
        let mut ppd = uniform_ppd(lo, hi, l);
        ppd.probs = vec![0.0; l];
        ppd.probs[bin] = 1.0;
        ppd
    }

    #[test]
    fn ppd_mean_point_mass_is_bin_center() {
        let ppd = point_mass_ppd(0.0, 4.0, 4, 2);
        assert!((ppd_mean(&ppd) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn ppd_mean_symmetric_split_is_midpoint() {
        let mut ppd = uniform_ppd(0.0, 4.0, 4);
        ppd.probs = vec![0.5, 0.0, 0.0, 0.5];
        assert!((ppd_mean(&ppd) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ppd_mean_uniform() {
        let ppd = uniform_ppd(0.0, 4.0, 4);
        assert!((ppd_mean(&ppd) - 2.0).abs() < 1e-12);
        assert!(ppd_mean(&ppd) >= ppd.support.0 && ppd_mean(&ppd) <= ppd.support.1);
    }

    #[test]
    fn interval_of_point_mass_stays_in_bin() {
        let ppd = point_mass_ppd(0.0, 4.0, 4, 1);
        let (lo, hi) = credible_interval(&ppd, 0.1, 5000, 3).unwrap();
        assert!(lo >= 1.0 && hi <= 2.0);
    }

    #[test]
    fn interval_of_uniform_matches_exact_quantiles() {
        let ppd = uniform_ppd(0.0, 1.0, 16);
        let (lo, hi) = credible_interval(&ppd, 0.1, 200_000, 4).unwrap();
        assert!((lo - 0.05).abs() < 0.01, "lo {lo}");
        assert!((hi - 0.95).abs() < 0.01, "hi {hi}");
    }

    #[test]
    fn intervals_nest_across_alpha() {
        let ppd = uniform_ppd(-2.0, 7.0, 32);
        let wide = credible_interval(&ppd, 0.05, 10_000, 5).unwrap();
        let narrow = credible_interval(&ppd, 0.5, 10_000, 5).unwrap();
        assert!(wide.0 <= narrow.0 && narrow.1 <= wide.1);
    }

    fn toy_state() -> ModelState {
        ModelState::init(
            ModelConfig {
                n_layers: 1,
                d_model: 8,
                n_heads: 2,
                n_bins: 8,
                max_features: 4,
                base_support: (-10.0, 10.0),
                theta_t: 1.0,
            },
            7,
        )
        .unwrap()
    }

    fn toy_table(n: usize, seed: u64) -> ObservationalTable {
        let mut rng = rng::stream(seed);
        let d = 2;
        let t: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
        let x: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 2.0 * t[i] as f64 + x[i * d] + 0.1 * rng.gen_range(-1.0..1.0))
            .collect();
        ObservationalTable::new(d, t, x, y).unwrap()
    }

    #[test]
    fn cate_point_is_difference_of_means_and_antisymmetric() {
        let state = toy_state();
        let table = toy_table(20, 1);
        let opts = EstimateOptions {
            n_samples: 2000,
            ..Default::default()
        };
        let pairs = cate_ppds(&state, &table, &[vec![0.3, -0.2]], &opts).unwrap();
        let est = estimate_cate(&state, &table, &[0.3, -0.2], &opts).unwrap();
        let expected = ppd_mean(&pairs[0].1) - ppd_mean(&pairs[0].0);
        assert!((est.point - expected).abs() < 1e-12);
        assert!(est.interval.0 <= est.interval.1);
    }

    #[test]
    fn swapping_arm_ppds_flips_the_point_sign_exactly() {
        let p0 = uniform_ppd(0.0, 1.0, 8);
        let mut p1 = uniform_ppd(0.0, 1.0, 8);
        p1.probs = vec![0.0, 0.0, 0.0, 0.0, 0.25, 0.25, 0.25, 0.25];
        let opts = EstimateOptions { n_samples: 500, ..Default::default() };
        let a = cate_estimate_from_pair(&p0, &p1, &opts, 3);
        let b = cate_estimate_from_pair(&p1, &p0, &opts, 3);
        assert_eq!(a.point, -b.point);
    }

    #[test]
    fn ate_point_is_mean_of_cate_points() {
        let state = toy_state();
        let table = toy_table(12, 3);
        let opts = EstimateOptions { n_samples: 300, ..Default::default() };
        let queries: Vec<Vec<f64>> = (0..table.n()).map(|i| table.x_row(i).to_vec()).collect();
        let cates = estimate_cates(&state, &table, &queries, &opts).unwrap();
        let mean_point = cates.iter().map(|e| e.point).sum::<f64>() / cates.len() as f64;
        let ate = estimate_ate(&state, &table, &opts).unwrap();
        assert!((ate.point - mean_point).abs() < 1e-12);
    }

    #[test]
    fn identical_ppds_give_zero_point_and_straddling_interval() {
        let ppd = uniform_ppd(0.0, 1.0, 8);
        let opts = EstimateOptions {
            n_samples: 20_000,
            ..Default::default()
        };
        let est = cate_estimate_from_pair(&ppd, &ppd, &opts, 11);
        assert!(est.point.abs() < 1e-12);
        assert!(est.interval.0 < 0.0 && est.interval.1 > 0.0);
    }

    #[test]
    fn degenerate_ppds_give_exact_cate() {
        let p0 = point_mass_ppd(0.0, 4.0, 4, 0); // center 0.5... bin 0 -> [0,1]
        let p1 = point_mass_ppd(0.0, 4.0, 4, 2); // bin 2 -> [2,3]
        let opts = EstimateOptions {
            n_samples: 5000,
            ..Default::default()
        };
        let est = cate_estimate_from_pair(&p0, &p1, &opts, 13);
        assert!((est.point - 2.0).abs() < 1e-12);
        // draws differ by at most one bin width on each side
        assert!(est.interval.0 > 2.0 - 2.0 && est.interval.1 < 2.0 + 2.0);
    }

    #[test]
    fn ate_of_single_row_table_equals_cate() {
        let state = toy_state();
        let table = toy_table(1, 2);
        let opts = EstimateOptions {
            n_samples: 2000,
            ..Default::default()
        };
        let ate = estimate_ate(&state, &table, &opts).unwrap();
        let cate = estimate_cate(&state, &table, table.x_row(0), &opts).unwrap();
        assert!((ate.point - cate.point).abs() < 1e-12);
    }

    #[test]
    fn ate_of_identical_rows_equals_common_cate() {
        let state = toy_state();
        let n = 6;
        let table = ObservationalTable::new(
            2,
            vec![1, 0, 1, 0, 1, 0],
            vec![0.5, -0.5].repeat(n),
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
        )
        .unwrap();
        let opts = EstimateOptions {
            n_samples: 500,
            ..Default::default()
        };
        let ate = estimate_ate(&state, &table, &opts).unwrap();
        let cate = estimate_cate(&state, &table, &[0.5, -0.5], &opts).unwrap();
        assert!((ate.point - cate.point).abs() < 1e-12);
    }

    #[test]
    fn weak_cate_constant_outcome_is_zero() {
        let n = 40;
        let mut rng = rng::stream(5);
        let t: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
        let x: Vec<f64> = (0..n * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let table = ObservationalTable::new(2, t, x, vec![3.0; n]).unwrap();
        for tau in weak_cate(&table).unwrap() {
            assert!(tau.abs() < 1e-6);
        }
    }

    #[test]
    fn weak_cate_recovers_pure_treatment_effect() {
        let n = 60;
        let mut rng = rng::stream(6);
        let t: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let x: Vec<f64> = (0..n * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = t.iter().map(|&ti| 2.0 * ti as f64).collect();
        let table = ObservationalTable::new(2, t, x, y).unwrap();
        for tau in weak_cate(&table).unwrap() {
            assert!((tau - 2.0).abs() < 0.1, "tau {tau}");
        }
    }

    #[test]
    fn weak_cate_is_deterministic_and_validates_input() {
        let table = toy_table(30, 7);
        assert_eq!(weak_cate(&table).unwrap(), weak_cate(&table).unwrap());
        let single_arm =
            ObservationalTable::new(1, vec![1; 12], vec![0.0; 12], vec![1.0; 12]).unwrap();
        assert!(matches!(
            weak_cate(&single_arm),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn windows_pass_through_when_context_fits() {
        let table = toy_table(16, 8);
        let queries: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 0.0]).collect();
        let w = retrieval_windows(&table, &queries, 16).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].query_ids, vec![0, 1, 2, 3, 4]);
        assert_eq!(w[0].context_rows, (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn windows_have_exact_length_and_partition_queries() {
        let table = toy_table(200, 9);
        let queries: Vec<Vec<f64>> = (0..37)
            .map(|i| vec![(i as f64 / 37.0) * 2.0 - 1.0, 0.3])
            .collect();
        let max_ctx = 64;
        let windows = retrieval_windows(&table, &queries, max_ctx).unwrap();
        let mut seen = vec![false; queries.len()];
        for w in &windows {
            assert_eq!(w.context_rows.len(), max_ctx);
            for &q in &w.query_ids {
                assert!(!seen[q], "query {q} assigned twice");
                seen[q] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn window_selection_covers_requested_rank_range() {
        // context tau values 1..=100, batch range [40, 60], window length 21:
        // the best window covers ranks 40..=60
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let start = best_window_start(&v, 21, 40.0, 60.0);
        assert_eq!(start, 39); // v[39] = 40, v[59] = 60
        assert_eq!(start, best_window_start_exhaustive(&v, 21, 40.0, 60.0));
    }

    #[test]
    fn bisection_matches_exhaustive_scan() {
        let mut rng = rng::stream(12);
        for trial in 0..300 {
            let n = rng.gen_range(10..120usize);
            let w = rng.gen_range(2..=n.min(40));
            let mut v: Vec<f64> = (0..n)
                .map(|_| {
                    let x: f64 = rng.gen_range(-5.0..5.0);
                    // occasional plateaus
                    if rng.gen_range(0..4) == 0 { x.round() } else { x }
                })
                .collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let lo: f64 = rng.gen_range(-6.0..6.0);
            let hi = lo + rng.gen_range(0.0..4.0);
            let fast = best_window_start(&v, w, lo, hi);
            let slow = best_window_start_exhaustive(&v, w, lo, hi);
            assert_eq!(fast, slow, "trial {trial}: n={n} w={w} lo={lo} hi={hi}");
        }
    }
}

