//! Coverage calibration: regression and CATE coverage curves, integrated
//! coverage error (negative = overconfident), and post-hoc temperature
//! tuning that drives the regression ICE toward zero on held-out folds.

use crate::error::{Error, Result};
use crate::infer::{sample_ppd, EstimateOptions};
use crate::model::{ppd_from_logits, ModelState, QueryRow};
use crate::prior::{DgpInstance, ObservationalTable};
use crate::rng;
use crate::stats;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    Regression,
    Cate,
}

/// Empirical coverage at a grid of credibility levels.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub levels: Vec<f64>,
    pub coverage: Vec<f64>,
    pub kind: CurveKind,
}

impl CoverageCurve {
    pub fn validate(&self) -> Result<()> {
        if self.levels.len() != self.coverage.len() || self.levels.len() < 2 {
            return Err(Error::arg("CoverageCurve: need matching grids, >= 2 points"));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::arg("CoverageCurve: levels must increase"));
        }
        if self
            .levels
            .iter()
            .chain(self.coverage.iter())
            .any(|&v| !(0.0..=1.0).contains(&v))
        {
            return Err(Error::arg("CoverageCurve: values outside [0,1]"));
        }
        Ok(())
    }
}

/// 19 levels, 0.05 .. 0.95 in steps of 0.05.
pub fn default_level_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// 25 log-spaced temperatures in [0.05, 5]. The low end matters: the
/// Gaussian-smoothed training targets leave the model conservative in
/// distribution, so the regression-ICE zero crossing sits well below 1.
pub fn default_temperature_grid() -> Vec<f64> {
    let (lo, hi) = (0.05f64.ln(), 5.0f64.ln());
    (0..25)
        .map(|i| (lo + (hi - lo) * i as f64 / 24.0).exp())
        .collect()
}

/// Trapezoidal integral of (coverage - level) over the level grid.
pub fn ice(curve: &CoverageCurve) -> Result<f64> {
    curve.validate()?;
    let gap: Vec<f64> = curve
        .coverage
        .iter()
        .zip(&curve.levels)
        .map(|(&c, &l)| c - l)
        .collect();
    Ok(stats::trapezoid(&curve.levels, &gap))
}

/// Fold assignment stratified by treatment arm so every fold sees both arms
/// whenever the arm counts allow it.
pub fn arm_stratified_folds(t: &[u8], k_folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k_folds < 2 {
        return Err(Error::arg("k_folds must be at least 2"));
    }
    let mut rng = rng::stream(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k_folds];
    for arm in [0u8, 1u8] {
        let mut members: Vec<usize> = (0..t.len()).filter(|&i| t[i] == arm).collect();
        members.shuffle(&mut rng);
        for (pos, idx) in members.into_iter().enumerate() {
            folds[pos % k_folds].push(idx);
        }
    }
    for f in folds.iter_mut() {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Coverage of the observed y by the factual-arm CEPO interval, evaluated
/// out of fold. Fold-level logits are computed once and shared across levels.
pub struct RegressionCoverage {
    pub curve: CoverageCurve,
    pub skipped_folds: Vec<usize>,
}

fn coverage_from_sorted_draws(draws: &[f64], target: f64, levels: &[f64]) -> Vec<bool> {
    levels
        .iter()
        .map(|&level| {
            let alpha = 1.0 - level;
            let lo = stats::quantile_sorted(draws, alpha / 2.0);
            let hi = stats::quantile_sorted(draws, 1.0 - alpha / 2.0);
            target >= lo && target <= hi
        })
        .collect()
}

/// Per-row logits for the factual query of every held-out row, indexed by row.
/// Shared by coverage evaluation and temperature tuning.
struct FoldLogits {
    rows: Vec<usize>,
    logits: Vec<Vec<f64>>,
    support: (f64, f64),
    edges: Vec<f64>,
}

fn fold_logits(
    state: &ModelState,
    table: &ObservationalTable,
    folds: &[Vec<usize>],
    max_context: usize,
) -> Result<(Vec<FoldLogits>, Vec<usize>)> {
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for (f, fold_rows) in folds.iter().enumerate() {
        if fold_rows.is_empty() {
            continue;
        }
        let mut held_out = vec![false; table.n()];
        for &i in fold_rows {
            held_out[i] = true;
        }
        let mut train_rows: Vec<usize> = (0..table.n()).filter(|&i| !held_out[i]).collect();
        if train_rows.len() > max_context {
            // evenly spaced subsample keeps the fold context inside the
            // forward window without reordering
            let n = train_rows.len();
            train_rows = (0..max_context)
                .map(|j| train_rows[j * n / max_context])
                .collect();
        }
        if train_rows.is_empty() {
            skipped.push(f);
            continue;
        }
        let ctx = table.subset(&train_rows);
        if !ctx.has_both_arms() {
            skipped.push(f);
            continue;
        }
        let queries: Vec<QueryRow> = fold_rows
            .iter()
            .map(|&i| QueryRow {
                t: table.t[i],
                x: table.x_row(i).to_vec(),
            })
            .collect();
        let batch = crate::model::TokenBatch::from_table(&ctx, queries)?;
        let (logits, lo, hi, edges) = crate::model::forward_logits(state, &batch)?;
        out.push(FoldLogits {
            rows: fold_rows.clone(),
            logits,
            support: (lo, hi),
            edges,
        });
    }
    Ok((out, skipped))
}

/// k-fold regression coverage at the model's configured temperature.
pub fn regression_coverage(
    state: &ModelState,
    table: &ObservationalTable,
    levels: &[f64],
    k_folds: usize,
    opts: &EstimateOptions,
) -> Result<RegressionCoverage> {
    let folds = arm_stratified_folds(&table.t, k_folds, rng::split(opts.seed, 901))?;
    let (fold_data, skipped) = fold_logits(state, table, &folds, opts.max_context)?;
    if fold_data.is_empty() {
        return Err(Error::Estimation(
            "regression_coverage: all folds degenerate".into(),
        ));
    }
    let mut hits = vec![0usize; levels.len()];
    let mut total = 0usize;
    for fd in &fold_data {
        for (slot, &row) in fd.rows.iter().enumerate() {
            let ppd = ppd_from_logits(
                &fd.logits[slot],
                fd.support,
                &fd.edges,
                state.config.theta_t,
            )?;
            let mut rng = rng::substream(opts.seed, row as u64);
            let mut draws = sample_ppd(&ppd, &mut rng, opts.n_samples);
            draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (li, covered) in coverage_from_sorted_draws(&draws, table.y[row], levels)
                .into_iter()
                .enumerate()
            {
                if covered {
                    hits[li] += 1;
                }
            }
            total += 1;
        }
    }
    let coverage = hits.iter().map(|&h| h as f64 / total as f64).collect();
    Ok(RegressionCoverage {
        curve: CoverageCurve {
            levels: levels.to_vec(),
            coverage,
            kind: CurveKind::Regression,
        },
        skipped_folds: skipped,
    })
}

/// Coverage of the true CATE by the paired-draw interval, per unit of a
/// simulated DGP (ground truth required).
pub fn cate_coverage(
    state: &ModelState,
    instance: &DgpInstance,
    levels: &[f64],
    opts: &EstimateOptions,
) -> Result<CoverageCurve> {
    let table = instance.observational();
    let queries: Vec<Vec<f64>> = (0..table.n()).map(|i| table.x_row(i).to_vec()).collect();
    let pairs = crate::infer::cate_ppds(state, &table, &queries, opts)?;
    let mut hits = vec![0usize; levels.len()];
    for (i, (p0, p1)) in pairs.iter().enumerate() {
        let tau_true = instance.mu1[i] - instance.mu0[i];
        let draw_seed = rng::split(opts.seed, i as u64);
        let mut rng1 = rng::substream(draw_seed, 1);
        let mut rng0 = rng::substream(draw_seed, 0);
        let d1 = sample_ppd(p1, &mut rng1, opts.n_samples);
        let d0 = sample_ppd(p0, &mut rng0, opts.n_samples);
        let mut diffs: Vec<f64> = d1.iter().zip(&d0).map(|(&a, &b)| a - b).collect();
        diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (li, covered) in coverage_from_sorted_draws(&diffs, tau_true, levels)
            .into_iter()
            .enumerate()
        {
            if covered {
                hits[li] += 1;
            }
        }
    }
    Ok(CoverageCurve {
        levels: levels.to_vec(),
        coverage: hits
            .iter()
            .map(|&h| h as f64 / pairs.len() as f64)
            .collect(),
        kind: CurveKind::Cate,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TemperatureTune {
    pub theta_t: f64,
    pub ice_mu_before: f64,
    pub ice_mu_after: f64,
}

/// Grid-search the softmax temperature to minimize |regression ICE| averaged
/// over folds; ties break toward the larger (more conservative) temperature.
/// Logits are computed once per fold and re-tempered per candidate.
pub fn tune_temperature(
    state: &ModelState,
    table: &ObservationalTable,
    temperatures: &[f64],
    levels: &[f64],
    k_folds: usize,
    opts: &EstimateOptions,
) -> Result<TemperatureTune> {
    if temperatures.is_empty() {
        return Err(Error::arg("tune_temperature: empty grid"));
    }
    if temperatures.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::arg("tune_temperature: temperatures must be positive"));
    }
    let folds = arm_stratified_folds(&table.t, k_folds, rng::split(opts.seed, 901))?;
    let (fold_data, _) = fold_logits(state, table, &folds, opts.max_context)?;
    if fold_data.is_empty() {
        return Err(Error::Estimation("tune_temperature: all folds degenerate".into()));
    }

    let fold_ice = |theta: f64| -> Result<(f64, f64)> {
        // (mean |fold ICE|, pooled ICE)
        let mut abs_sum = 0.0;
        let mut pooled_hits = vec![0usize; levels.len()];
        let mut pooled_total = 0usize;
        for fd in &fold_data {
            let mut hits = vec![0usize; levels.len()];
            for (slot, &row) in fd.rows.iter().enumerate() {
                let ppd = ppd_from_logits(&fd.logits[slot], fd.support, &fd.edges, theta)?;
                let mut rng = rng::substream(opts.seed, row as u64);
                let mut draws = sample_ppd(&ppd, &mut rng, opts.n_samples);
                draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for (li, covered) in coverage_from_sorted_draws(&draws, table.y[row], levels)
                    .into_iter()
                    .enumerate()
                {
                    if covered {
                        hits[li] += 1;
                        pooled_hits[li] += 1;
                    }
                }
                pooled_total += 1;
            }
            let curve = CoverageCurve {
                levels: levels.to_vec(),
                coverage: hits
                    .iter()
                    .map(|&h| h as f64 / fd.rows.len() as f64)
                    .collect(),
                kind: CurveKind::Regression,
            };
            abs_sum += ice(&curve)?.abs();
        }
        let pooled = CoverageCurve {
            levels: levels.to_vec(),
            coverage: pooled_hits
                .iter()
                .map(|&h| h as f64 / pooled_total as f64)
                .collect(),
            kind: CurveKind::Regression,
        };
        Ok((abs_sum / fold_data.len() as f64, ice(&pooled)?))
    };

    let (_, ice_before) = fold_ice(state.config.theta_t)?;
    let mut best_theta = temperatures[0];
    let mut best_score = f64::INFINITY;
    for &theta in temperatures {
        let (score, _) = fold_ice(theta)?;
        if score < best_score || (score == best_score && theta > best_theta) {
            best_score = score;
            best_theta = theta;
        }
    }
    let (_, ice_after) = fold_ice(best_theta)?;
    Ok(TemperatureTune {
        theta_t: best_theta,
        ice_mu_before: ice_before,
        ice_mu_after: ice_after,
    })
}
