//! Estimation-quality metrics (PEHE, ATE relative error) and policy-value
//! metrics: the Qini curve over units ranked by predicted CATE, its score,
//! and the stratified k-fold splitting protocol used for honest evaluation.

use crate::error::{Error, Result};
use crate::rng;
use crate::stats;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// Root mean squared deviation between predicted and true CATEs.
pub fn pehe(tau_hat: &[f64], tau_true: &[f64]) -> Result<f64> {
    if tau_hat.len() != tau_true.len() || tau_hat.is_empty() {
        return Err(Error::arg("pehe: need equal nonempty vectors"));
    }
    let mse = tau_hat
        .iter()
        .zip(tau_true)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / tau_hat.len() as f64;
    Ok(mse.sqrt())
}

/// |lambda_hat - lambda| / |lambda|.
pub fn ate_rel_error(lambda_hat: f64, lambda_true: f64) -> Result<f64> {
    if lambda_true == 0.0 {
        return Err(Error::Metric("ate_rel_error: true ATE is zero".into()));
    }
    Ok((lambda_hat - lambda_true).abs() / lambda_true.abs())
}

/// Cumulative normalized uplift when units are ranked by predicted CATE.
///
/// lambda(q) is the inverse-rate-weighted uplift sum over the top q-fraction
/// (prefix treatment rate); Q(q) = lambda(q) / lambda(1) normalizes so that
/// Q(1) = 1 and a random ranking tracks the diagonal.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QiniCurve {
    pub q_grid: Vec<f64>,
    pub q_values: Vec<f64>,
    pub lambda_q: Vec<f64>,
    /// Prefixes whose treatment rate hit 0 or 1 (their Q is pinned to 0).
    pub degenerate: Vec<bool>,
    pub lambda_full: f64,
    pub qini_score: f64,
}

/// Evaluate the Qini curve of a ranking given RCT outcomes. Rows are
/// stable-sorted by predicted CATE descending (ties by original index);
/// lambda(q) uses the prefix treatment rate.
pub fn qini_curve(y: &[f64], t: &[u8], tau_hat: &[f64], q_grid: &[f64]) -> Result<QiniCurve> {
    let n = y.len();
    if t.len() != n || tau_hat.len() != n || n == 0 {
        return Err(Error::arg("qini_curve: length mismatch"));
    }
    if !(t.iter().any(|&v| v == 1) && t.iter().any(|&v| v == 0)) {
        return Err(Error::Metric("qini_curve: both arms required".into()));
    }
    if q_grid.is_empty() || q_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::arg("qini_curve: q_grid must be increasing"));
    }
    if q_grid[0] <= 0.0 || *q_grid.last().unwrap() > 1.0 {
        return Err(Error::arg("qini_curve: q_grid must lie in (0,1]"));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        tau_hat[b]
            .partial_cmp(&tau_hat[a])
            .unwrap()
            .then(a.cmp(&b))
    });

    // prefix sums over the ranked order
    let mut cum_t = vec![0.0; n + 1];
    let mut cum_ty = vec![0.0; n + 1];
    let mut cum_cy = vec![0.0; n + 1];
    for (rank, &i) in order.iter().enumerate() {
        cum_t[rank + 1] = cum_t[rank] + t[i] as f64;
        cum_ty[rank + 1] = cum_ty[rank] + t[i] as f64 * y[i];
        cum_cy[rank + 1] = cum_cy[rank] + (1.0 - t[i] as f64) * y[i];
    }
    let lambda_at = |k: usize| -> (f64, bool) {
        if k == 0 {
            return (0.0, true);
        }
        let r = cum_t[k] / k as f64;
        if r == 0.0 || r == 1.0 {
            return (0.0, true);
        }
        (cum_ty[k] / r - cum_cy[k] / (1.0 - r), false)
    };
    let (lambda_full, full_degenerate) = lambda_at(n);
    debug_assert!(!full_degenerate);

    let mut q_values = Vec::with_capacity(q_grid.len());
    let mut lambda_q = Vec::with_capacity(q_grid.len());
    let mut degenerate = Vec::with_capacity(q_grid.len());
    for &q in q_grid {
        let k = (q * n as f64).floor() as usize;
        let (lam, degen) = lambda_at(k.min(n));
        let qv = if degen || lambda_full == 0.0 {
            0.0
        } else {
            lam / lambda_full
        };
        q_values.push(qv);
        lambda_q.push(lam);
        degenerate.push(degen || lambda_full == 0.0);
    }

    let mut curve = QiniCurve {
        q_grid: q_grid.to_vec(),
        q_values,
        lambda_q,
        degenerate,
        lambda_full,
        qini_score: 0.0,
    };
    curve.qini_score = qini_score(&curve);
    Ok(curve)
}

/// Trapezoidal area under Q over q in [0,1], anchoring Q(0) = 0.
pub fn qini_score(curve: &QiniCurve) -> f64 {
    let mut xs = Vec::with_capacity(curve.q_grid.len() + 1);
    let mut ys = Vec::with_capacity(curve.q_grid.len() + 1);
    xs.push(0.0);
    ys.push(0.0);
    xs.extend_from_slice(&curve.q_grid);
    ys.extend_from_slice(&curve.q_values);
    stats::trapezoid(&xs, &ys)
}

/// 100 evenly spaced fractions (0,1].
pub fn default_q_grid() -> Vec<f64> {
    (1..=100).map(|i| i as f64 / 100.0).collect()
}

pub struct KFoldSplits {
    /// (train, test) index pairs; every row lands in exactly one test fold.
    pub folds: Vec<(Vec<usize>, Vec<usize>)>,
    /// True when a joint (binarized-y, t) stratum was smaller than k and the
    /// split fell back to stratifying on t alone.
    pub fell_back: bool,
}

/// Stratified k-fold splits, jointly on (binarized y, t). Binary outcomes are
/// used as-is, continuous ones split at the median.
pub fn stratified_kfold(y: &[f64], t: &[u8], k: usize, seed: u64) -> Result<KFoldSplits> {
    let n = y.len();
    if t.len() != n || n == 0 {
        return Err(Error::arg("stratified_kfold: length mismatch"));
    }
    if k < 2 || k > n {
        return Err(Error::arg("stratified_kfold: k outside 2..=n"));
    }
    let y_is_binary = y.iter().all(|&v| v == 0.0 || v == 1.0);
    let median = if y_is_binary { 0.5 } else { stats::median(y) };
    let y_bin = |i: usize| -> u8 { u8::from(y[i] > median) };

    let joint_key = |i: usize| -> u8 { (y_bin(i) << 1) | t[i] };
    let joint_small = {
        let mut counts = [0usize; 4];
        for i in 0..n {
            counts[joint_key(i) as usize] += 1;
        }
        counts.iter().any(|&c| c > 0 && c < k)
    };
    let key: Box<dyn Fn(usize) -> u8> = if joint_small {
        Box::new(move |i| t[i])
    } else {
        Box::new(joint_key)
    };

    let mut rng = rng::stream(seed);
    let mut fold_of = vec![0usize; n];
    for stratum in 0..4u8 {
        let mut members: Vec<usize> = (0..n).filter(|&i| key(i) == stratum).collect();
        members.shuffle(&mut rng);
        for (pos, i) in members.into_iter().enumerate() {
            fold_of[i] = pos % k;
        }
    }
    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        folds.push((train, test));
    }
    Ok(KFoldSplits {
        folds,
        fell_back: joint_small,
    })
}
