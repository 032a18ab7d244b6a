//! Exact Bayesian inference over finite, fully enumerable DGP families.
//!
//! Each parameter describes discrete tables P(U), P(X|U), P(T|X,U), and
//! P(Y_t|X,U); the latent U is marginalized exactly, so posteriors,
//! CEPO pushforwards, and both sides of the loss-equivalence identity can be
//! computed by brute force. This is the reference the learned estimator and
//! the theory claims are checked against: posterior-mean CEPOs converge
//! exactly when CEPOs are identifiable, and a constructed confounded pair
//! shows the converse.

use crate::error::{Error, Result};
use crate::prior::ObservationalTable;
use crate::rng::{self, StreamRng};
use rand::Rng;
use serde::{Deserialize, Serialize};

const MAX_SUPPORT: usize = 4;
const MAX_FAMILY: usize = 64;
const ATOM_MERGE_TOL: f64 = 1e-12;

/// One finite-support DGP: tables over u, x, t, y indices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscretePsi {
    /// P(U = u).
    pub p_u: Vec<f64>,
    /// P(X = x | U = u), indexed [u][x].
    pub p_x_given_u: Vec<Vec<f64>>,
    /// P(T = 1 | X = x, U = u), indexed [u][x].
    pub p_t1_given_xu: Vec<Vec<f64>>,
    /// P(Y_t = y | X = x, U = u), indexed [t][u][x][y].
    pub p_y_given_xu: [Vec<Vec<Vec<f64>>>; 2],
}

impl DiscretePsi {
    fn n_u(&self) -> usize {
        self.p_u.len()
    }

    fn validate(&self, n_x: usize, n_y: usize) -> Result<()> {
        let n_u = self.n_u();
        let row_ok = |row: &[f64]| -> bool {
            row.iter().all(|&p| (0.0..=1.0).contains(&p))
                && (row.iter().sum::<f64>() - 1.0).abs() <= 1e-12
        };
        if n_u == 0 || n_u > MAX_SUPPORT || !row_ok(&self.p_u) {
            return Err(Error::arg("DiscretePsi: bad P(U)"));
        }
        if self.p_x_given_u.len() != n_u
            || self
                .p_x_given_u
                .iter()
                .any(|r| r.len() != n_x || !row_ok(r))
        {
            return Err(Error::arg("DiscretePsi: bad P(X|U)"));
        }
        if self.p_t1_given_xu.len() != n_u
            || self
                .p_t1_given_xu
                .iter()
                .any(|r| r.len() != n_x || r.iter().any(|&p| !(0.0..=1.0).contains(&p)))
        {
            return Err(Error::arg("DiscretePsi: bad P(T|X,U)"));
        }
        for t in 0..2 {
            let table = &self.p_y_given_xu[t];
            if table.len() != n_u
                || table
                    .iter()
                    .any(|per_u| per_u.len() != n_x || per_u.iter().any(|r| r.len() != n_y || !row_ok(r)))
            {
                return Err(Error::arg("DiscretePsi: bad P(Y_t|X,U)"));
            }
        }
        Ok(())
    }

    /// P(X = x) with U marginalized out.
    pub fn p_x(&self, x: usize) -> f64 {
        (0..self.n_u())
            .map(|u| self.p_u[u] * self.p_x_given_u[u][x])
            .sum()
    }

    /// Joint observational probability P(x, t, y), U marginalized exactly.
    pub fn p_obs(&self, x: usize, t: u8, y: usize) -> f64 {
        (0..self.n_u())
            .map(|u| {
                let pt = if t == 1 {
                    self.p_t1_given_xu[u][x]
                } else {
                    1.0 - self.p_t1_given_xu[u][x]
                };
                self.p_u[u] * self.p_x_given_u[u][x] * pt * self.p_y_given_xu[t as usize][u][x][y]
            })
            .sum()
    }

    /// The true CEPO mu_t(x) = sum_u E[Y_t | x, u] P(u | x).
    pub fn mu(&self, t: u8, x: usize, y_support: &[f64]) -> f64 {
        let weights: Vec<f64> = (0..self.n_u())
            .map(|u| self.p_u[u] * self.p_x_given_u[u][x])
            .collect();
        let total: f64 = weights.iter().sum();
        (0..self.n_u())
            .map(|u| {
                let e_y: f64 = self.p_y_given_xu[t as usize][u][x]
                    .iter()
                    .zip(y_support)
                    .map(|(&p, &y)| p * y)
                    .sum();
                e_y * weights[u] / total
            })
            .sum()
    }

    /// Draw one observational row (x index, t, y index).
    pub fn sample_row(&self, rng: &mut StreamRng) -> (usize, u8, usize) {
        let draw = |probs: &[f64], rng: &mut StreamRng| -> usize {
            let u: f64 = rng.gen_range(0.0..1.0);
            let mut acc = 0.0;
            for (i, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            probs.len() - 1
        };
        let u = draw(&self.p_u, rng);
        let x = draw(&self.p_x_given_u[u], rng);
        let t = u8::from(rng.gen_range(0.0..1.0) < self.p_t1_given_xu[u][x]);
        let y = draw(&self.p_y_given_xu[t as usize][u][x], rng);
        (x, t, y)
    }
}

/// A finite parameter set with exact likelihoods and a prior over it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscreteDgpFamily {
    pub x_support: Vec<f64>,
    pub y_support: Vec<f64>,
    pub parameters: Vec<DiscretePsi>,
    pub prior: Vec<f64>,
}

impl DiscreteDgpFamily {
    pub fn new(
        x_support: Vec<f64>,
        y_support: Vec<f64>,
        parameters: Vec<DiscretePsi>,
        prior: Vec<f64>,
    ) -> Result<Self> {
        if x_support.is_empty() || x_support.len() > MAX_SUPPORT {
            return Err(Error::arg("family: |X| outside 1..=4"));
        }
        if y_support.is_empty() || y_support.len() > MAX_SUPPORT {
            return Err(Error::arg("family: |Y| outside 1..=4"));
        }
        if parameters.is_empty() || parameters.len() > MAX_FAMILY {
            return Err(Error::Size(format!(
                "family size {} outside 1..={MAX_FAMILY}",
                parameters.len()
            )));
        }
        if prior.len() != parameters.len()
            || (prior.iter().sum::<f64>() - 1.0).abs() > 1e-12
            || prior.iter().any(|&p| p < 0.0)
        {
            return Err(Error::arg("family: prior must sum to 1"));
        }
        for psi in &parameters {
            psi.validate(x_support.len(), y_support.len())?;
        }
        Ok(DiscreteDgpFamily {
            x_support,
            y_support,
            parameters,
            prior,
        })
    }

    pub fn uniform_prior(n: usize) -> Vec<f64> {
        vec![1.0 / n as f64; n]
    }

    fn support_index(support: &[f64], v: f64) -> Result<usize> {
        support
            .iter()
            .position(|&s| (s - v).abs() < 1e-9)
            .ok_or_else(|| Error::arg(format!("value {v} outside the finite support")))
    }

    /// Map an observational table onto support indices.
    fn index_rows(&self, table: &ObservationalTable) -> Result<Vec<(usize, u8, usize)>> {
        if table.n_covariates != 1 {
            return Err(Error::arg("oracle tables carry a single covariate"));
        }
        (0..table.n())
            .map(|i| {
                let x = Self::support_index(&self.x_support, table.x[i])?;
                let y = Self::support_index(&self.y_support, table.y[i])?;
                Ok((x, table.t[i], y))
            })
            .collect()
    }

    /// Sample an observational table of n rows from one parameter's law.
    pub fn sample_table(&self, psi: &DiscretePsi, n: usize, seed: u64) -> ObservationalTable {
        let mut rng = rng::stream(seed);
        let mut t = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let (xi, ti, yi) = psi.sample_row(&mut rng);
            x.push(self.x_support[xi]);
            t.push(ti);
            y.push(self.y_support[yi]);
        }
        ObservationalTable {
            n_covariates: 1,
            t,
            x,
            y,
        }
    }

    /// Row-wise log-likelihood of the table under one parameter.
    pub fn obs_likelihood(&self, psi: &DiscretePsi, table: &ObservationalTable) -> Result<f64> {
        if table.t.is_empty() {
            return Ok(0.0);
        }
        let rows = self.index_rows(table)?;
        Ok(rows
            .iter()
            .map(|&(x, t, y)| psi.p_obs(x, t, y).ln())
            .sum())
    }

    /// Exact posterior weights over the family given the table.
    pub fn exact_posterior(&self, table: &ObservationalTable) -> Result<Vec<f64>> {
        let log_liks: Vec<f64> = if table.t.is_empty() {
            vec![0.0; self.parameters.len()]
        } else {
            let rows = self.index_rows(table)?;
            self.parameters
                .iter()
                .map(|psi| rows.iter().map(|&(x, t, y)| psi.p_obs(x, t, y).ln()).sum())
                .collect()
        };
        let log_post: Vec<f64> = log_liks
            .iter()
            .zip(&self.prior)
            .map(|(&l, &p)| if p > 0.0 { l + p.ln() } else { f64::NEG_INFINITY })
            .collect();
        let max = log_post.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::Estimation(
                "exact_posterior: table impossible under every parameter".into(),
            ));
        }
        let weights: Vec<f64> = log_post.iter().map(|&l| (l - max).exp()).collect();
        let sum: f64 = weights.iter().sum();
        Ok(weights.into_iter().map(|w| w / sum).collect())
    }

    /// Exact CEPO-PPD: pushforward of the posterior by psi -> mu_t(x; psi).
    pub fn exact_cepo_ppd(&self, table: &ObservationalTable, x: f64, t: u8) -> Result<DiscretePpd> {
        let xi = Self::support_index(&self.x_support, x)?;
        let posterior = self.exact_posterior(table)?;
        let mut atoms: Vec<(f64, f64)> = Vec::new();
        for (psi, &w) in self.parameters.iter().zip(&posterior) {
            let mu = psi.mu(t, xi, &self.y_support);
            match atoms
                .iter_mut()
                .find(|(value, _)| (*value - mu).abs() <= ATOM_MERGE_TOL)
            {
                Some((_, p)) => *p += w,
                None => atoms.push((mu, w)),
            }
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(DiscretePpd { atoms })
    }
}

/// Finite mixture of CEPO values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretePpd {
    pub atoms: Vec<(f64, f64)>,
}

impl DiscretePpd {
    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(v, p)| v * p).sum()
    }

    pub fn sd(&self) -> f64 {
        let m = self.mean();
        self.atoms
            .iter()
            .map(|&(v, p)| p * (v - m) * (v - m))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub n: usize,
    pub mean_abs_error: f64,
    pub mean_posterior_sd: f64,
}

/// Posterior-mean CEPO error against the truth, per context size, averaged
/// over seeds and over every (x, t) pair.
pub fn consistency_experiment(
    family: &DiscreteDgpFamily,
    psi_true: &DiscretePsi,
    n_grid: &[usize],
    n_seeds: usize,
    seed: u64,
) -> Result<Vec<ConsistencyRow>> {
    let mut rows = Vec::with_capacity(n_grid.len());
    for (gi, &n) in n_grid.iter().enumerate() {
        let mut err_sum = 0.0;
        let mut sd_sum = 0.0;
        let mut count = 0usize;
        for s in 0..n_seeds {
            let table_seed = rng::split(seed, (gi * n_seeds + s) as u64);
            let table = family.sample_table(psi_true, n, table_seed);
            for (xi, &x) in family.x_support.iter().enumerate() {
                for t in [0u8, 1u8] {
                    let ppd = family.exact_cepo_ppd(&table, x, t)?;
                    let truth = psi_true.mu(t, xi, &family.y_support);
                    err_sum += (ppd.mean() - truth).abs();
                    sd_sum += ppd.sd();
                    count += 1;
                }
            }
        }
        rows.push(ConsistencyRow {
            n,
            mean_abs_error: err_sum / count as f64,
            mean_posterior_sd: sd_sum / count as f64,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CounterexampleReport {
    /// Posterior after the sampled table (should equal the prior exactly).
    pub posterior: Vec<f64>,
    pub prior: Vec<f64>,
    pub posterior_mean_mu1: f64,
    pub posterior_mean_cate: f64,
    pub true_cate_a: f64,
    pub true_cate_b: f64,
    pub n_rows: usize,
}

/// Two observationally identical DGPs with different causal effects:
/// a fully confounded one (T = U = Y_t, CATE 0) and a randomized one
/// (T independent, Y_t = t, CATE 1). Both induce
/// P(T=1, Y=1) = P(T=0, Y=0) = 1/2, so no amount of data separates them.
pub fn nonidentifiable_counterexample(
    n_rows: usize,
    seed: u64,
) -> Result<(DiscreteDgpFamily, CounterexampleReport)> {
    // psi_a: U ~ Bern(1/2), T = U, Y_0 = Y_1 = U
    let psi_a = DiscretePsi {
        p_u: vec![0.5, 0.5],
        p_x_given_u: vec![vec![1.0], vec![1.0]],
        p_t1_given_xu: vec![vec![0.0], vec![1.0]],
        p_y_given_xu: [
            vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]],
            vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]],
        ],
    };
    // psi_b: trivial U, T ~ Bern(1/2), Y_t = t
    let psi_b = DiscretePsi {
        p_u: vec![1.0],
        p_x_given_u: vec![vec![1.0]],
        p_t1_given_xu: vec![vec![0.5]],
        p_y_given_xu: [vec![vec![vec![1.0, 0.0]]], vec![vec![vec![0.0, 1.0]]]],
    };
    let family = DiscreteDgpFamily::new(
        vec![0.0],
        vec![0.0, 1.0],
        vec![psi_a, psi_b],
        vec![0.5, 0.5],
    )?;

    let table = family.sample_table(&family.parameters[0], n_rows, seed);
    let posterior = family.exact_posterior(&table)?;
    let x = family.x_support[0];
    let mu1 = family.exact_cepo_ppd(&table, x, 1)?.mean();
    let mu0 = family.exact_cepo_ppd(&table, x, 0)?.mean();
    let cate = |psi: &DiscretePsi| {
        psi.mu(1, 0, &family.y_support) - psi.mu(0, 0, &family.y_support)
    };
    let report = CounterexampleReport {
        posterior: posterior.clone(),
        prior: family.prior.clone(),
        posterior_mean_mu1: mu1,
        posterior_mean_cate: mu1 - mu0,
        true_cate_a: cate(&family.parameters[0]),
        true_cate_b: cate(&family.parameters[1]),
        n_rows,
    };
    Ok((family, report))
}

// ---------------------------------------------------------------------------
// loss equivalence by full enumeration
// ---------------------------------------------------------------------------

/// All multisets of `n` draws over `k` items, with multinomial coefficients.
fn enumerate_multisets(k: usize, n: usize) -> Vec<(Vec<usize>, f64)> {
    fn factorial(n: usize) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }
    fn recurse(
        item: usize,
        remaining: usize,
        counts: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, f64)>,
        n: usize,
    ) {
        if item == counts.len() - 1 {
            counts[item] = remaining;
            let coeff =
                factorial(n) / counts.iter().map(|&c| factorial(c)).product::<f64>();
            out.push((counts.clone(), coeff));
            counts[item] = 0;
            return;
        }
        for c in 0..=remaining {
            counts[item] = c;
            recurse(item + 1, remaining - c, counts, out, n);
            counts[item] = 0;
        }
    }
    let mut out = Vec::new();
    let mut counts = vec![0usize; k];
    recurse(0, n, &mut counts, &mut out, n);
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KlEquivalenceReport {
    /// max over the grid of |(L_t - L_KL) - mean(L_t - L_KL)|.
    pub max_deviation: f64,
    pub argmin_match: bool,
    pub loss_t: Vec<f64>,
    pub loss_kl: Vec<f64>,
    /// L_t at the realizable parameter (q = exact PPD), which equals the
    /// constant L_t - L_KL when the KL term vanishes.
    pub loss_t_at_optimum: f64,
    pub constant: f64,
}

/// Compare the causal data-prior loss with the expected forward KL by full
/// enumeration of all contexts of `n_rows` rows and all query covariates,
/// over a grid of random softmax parameterizations (one logit vector per
/// (context multiset, query x) key, over the mu-atom set of (x, t)).
pub fn kl_equivalence_check(
    family: &DiscreteDgpFamily,
    t: u8,
    n_rows: usize,
    n_thetas: usize,
    seed: u64,
) -> Result<KlEquivalenceReport> {
    if n_rows > 3 {
        return Err(Error::Size("kl_equivalence_check: n_rows above 3".into()));
    }
    let n_x = family.x_support.len();
    let n_y = family.y_support.len();
    let n_z = n_x * 2 * n_y;
    let multisets = enumerate_multisets(n_z, n_rows);
    if multisets.len() * n_x > 4096 {
        return Err(Error::Size("kl_equivalence_check: enumeration too large".into()));
    }
    let z_decode = |z: usize| -> (usize, u8, usize) {
        let x = z / (2 * n_y);
        let t = ((z / n_y) % 2) as u8;
        let y = z % n_y;
        (x, t, y)
    };

    // per-psi probabilities of each z and each multiset
    let n_psi = family.parameters.len();
    let p_z: Vec<Vec<f64>> = family
        .parameters
        .iter()
        .map(|psi| {
            (0..n_z)
                .map(|z| {
                    let (x, t, y) = z_decode(z);
                    psi.p_obs(x, t, y)
                })
                .collect()
        })
        .collect();
    let p_multiset = |psi_idx: usize, counts: &[usize], coeff: f64| -> f64 {
        coeff
            * counts
                .iter()
                .enumerate()
                .map(|(z, &c)| p_z[psi_idx][z].powi(c as i32))
                .product::<f64>()
    };

    // mu atoms per x for the requested treatment
    let mu_of: Vec<Vec<f64>> = (0..n_x)
        .map(|x| {
            family
                .parameters
                .iter()
                .map(|psi| psi.mu(t, x, &family.y_support))
                .collect()
        })
        .collect();
    let atoms: Vec<Vec<f64>> = (0..n_x)
        .map(|x| {
            let mut vals: Vec<f64> = Vec::new();
            for &m in &mu_of[x] {
                if !vals.iter().any(|&v| (v - m).abs() <= ATOM_MERGE_TOL) {
                    vals.push(m);
                }
            }
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals
        })
        .collect();
    let atom_index = |x: usize, m: f64| -> usize {
        atoms[x]
            .iter()
            .position(|&v| (v - m).abs() <= ATOM_MERGE_TOL)
            .expect("atom present")
    };

    // posterior and pushforward per (multiset, x)
    struct Key {
        /// joint weight P(D, x) under the prior-marginal law
        weight: f64,
        /// per-psi joint weights pi(psi) P^psi(D) P^psi(x)
        psi_weights: Vec<f64>,
        /// pushforward of the posterior over the atom set of x
        pushforward: Vec<f64>,
        x: usize,
    }
    let mut keys = Vec::with_capacity(multisets.len() * n_x);
    for (counts, coeff) in &multisets {
        // posterior over psi given the multiset
        let lik: Vec<f64> = (0..n_psi).map(|pi| p_multiset(pi, counts, *coeff)).collect();
        let evidence: f64 = lik
            .iter()
            .zip(&family.prior)
            .map(|(&l, &p)| l * p)
            .sum();
        for x in 0..n_x {
            let psi_weights: Vec<f64> = (0..n_psi)
                .map(|pi| family.prior[pi] * lik[pi] * family.parameters[pi].p_x(x))
                .collect();
            let weight: f64 = psi_weights.iter().sum();
            let mut pushforward = vec![0.0; atoms[x].len()];
            if evidence > 0.0 {
                for pi in 0..n_psi {
                    let post = family.prior[pi] * lik[pi] / evidence;
                    pushforward[atom_index(x, mu_of[x][pi])] += post;
                }
            }
            keys.push(Key {
                weight,
                psi_weights,
                pushforward,
                x,
            });
        }
    }

    // a theta assigns one logit vector per key; evaluate both losses
    let eval_losses = |qs: &[Vec<f64>]| -> (f64, f64) {
        let mut loss_t = 0.0;
        let mut loss_kl = 0.0;
        for (key, q) in keys.iter().zip(qs) {
            for pi in 0..n_psi {
                if key.psi_weights[pi] > 0.0 {
                    let a = atom_index(key.x, mu_of[key.x][pi]);
                    loss_t -= key.psi_weights[pi] * q[a].ln();
                }
            }
            if key.weight > 0.0 {
                let kl: f64 = key
                    .pushforward
                    .iter()
                    .zip(q)
                    .filter(|(&p, _)| p > 0.0)
                    .map(|(&p, &qa)| p * (p / qa).ln())
                    .sum();
                loss_kl += key.weight * kl;
            }
        }
        (loss_t, loss_kl)
    };

    let mut rng = rng::stream(seed);
    let mut loss_t_grid = Vec::with_capacity(n_thetas);
    let mut loss_kl_grid = Vec::with_capacity(n_thetas);
    for _ in 0..n_thetas {
        let qs: Vec<Vec<f64>> = keys
            .iter()
            .map(|key| {
                let logits: Vec<f64> = (0..key.pushforward.len())
                    .map(|_| rng.gen_range(-2.0..2.0))
                    .collect();
                crate::autodiff::softmax_t(&logits, 1.0).unwrap()
            })
            .collect();
        let (lt, lkl) = eval_losses(&qs);
        loss_t_grid.push(lt);
        loss_kl_grid.push(lkl);
    }

    let diffs: Vec<f64> = loss_t_grid
        .iter()
        .zip(&loss_kl_grid)
        .map(|(&a, &b)| a - b)
        .collect();
    let mean_diff = crate::stats::mean(&diffs);
    let max_deviation = diffs
        .iter()
        .map(|&d| (d - mean_diff).abs())
        .fold(0.0, f64::max);

    let argmin = |v: &[f64]| -> usize {
        v.iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0
    };

    // realizable parameter: q equals the exact pushforward (floored so the
    // softmax family can express it up to f64 rounding)
    let q_star: Vec<Vec<f64>> = keys
        .iter()
        .map(|key| {
            let total: f64 = key.pushforward.iter().sum();
            if total > 0.0 {
                key.pushforward.iter().map(|&p| (p / total).max(1e-300)).collect()
            } else {
                vec![1.0 / key.pushforward.len() as f64; key.pushforward.len()]
            }
        })
        .collect();
    let (lt_star, _) = eval_losses(&q_star);

    Ok(KlEquivalenceReport {
        max_deviation,
        argmin_match: argmin(&loss_t_grid) == argmin(&loss_kl_grid),
        loss_t: loss_t_grid,
        loss_kl: loss_kl_grid,
        loss_t_at_optimum: lt_star,
        constant: mean_diff,
    })
}

/// An identifiable reference family: X ~ Uniform{0,1} and T ~ Bernoulli(1/2)
/// for every parameter (trivial U), while P(Y_t = 1 | x) ranges over a grid,
/// so distinct parameters induce distinct observational laws.
pub fn identifiable_bernoulli_family(p_levels: &[f64]) -> Result<DiscreteDgpFamily> {
    if p_levels.is_empty() || p_levels.len() > 2 {
        return Err(Error::arg("identifiable_bernoulli_family: 1 or 2 levels"));
    }
    let mut parameters = Vec::new();
    let k = p_levels.len();
    for idx in 0..k.pow(4) {
        let p = |slot: usize| p_levels[(idx / k.pow(slot as u32)) % k];
        // slots: (t, x) = (0,0), (0,1), (1,0), (1,1)
        let y_table = |t: usize| -> Vec<Vec<Vec<f64>>> {
            vec![vec![
                {
                    let p1 = p(2 * t);
                    vec![1.0 - p1, p1]
                },
                {
                    let p1 = p(2 * t + 1);
                    vec![1.0 - p1, p1]
                },
            ]]
        };
        parameters.push(DiscretePsi {
            p_u: vec![1.0],
            p_x_given_u: vec![vec![0.5, 0.5]],
            p_t1_given_xu: vec![vec![0.5, 0.5]],
            p_y_given_xu: [y_table(0), y_table(1)],
        });
    }
    let n = parameters.len();
    DiscreteDgpFamily::new(
        vec![0.0, 1.0],
        vec![0.0, 1.0],
        parameters,
        DiscreteDgpFamily::uniform_prior(n),
    )
}
