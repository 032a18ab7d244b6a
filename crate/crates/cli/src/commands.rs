//! Subcommand implementations. Every command writes its declared outputs
//! plus a manifest.json recording the resolved config, seed, and code
//! version; feeding the manifest back as --config reproduces the run.

use crate::config::{
    self, CalibrateSection, EvaluateSection, Manifest, PriorFamily, RunConfig,
};
use crate::Common;
use anyhow::{anyhow, bail, Context, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use tabcause_core::calib;
use tabcause_core::error::Error as CoreError;
use tabcause_core::eval;
use tabcause_core::infer::{self, EstimateOptions};
use tabcause_core::io as core_io;
use tabcause_core::model::ModelState;
use tabcause_core::prior::{
    self, DgpInstance, PolynomialPrior, PriorSampler, SinusoidalPrior, TablePrior,
};
use tabcause_core::rng;
use tabcause_core::svg;
use tabcause_core::train::Trainer;

/// Exit classes: 1 validation, 2 IO, 3 numeric failure.
pub fn exit_class(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<CoreError>() {
            return match core {
                CoreError::Io(_) => 2,
                CoreError::Numeric { .. } => 3,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

struct Ctx {
    config: RunConfig,
    out: PathBuf,
    seed: u64,
    workers: usize,
    max_context: usize,
    manifest_paths: std::collections::BTreeMap<String, String>,
    used_paths: std::cell::RefCell<std::collections::BTreeMap<String, String>>,
}

fn prepare(common: &Common, command: &str) -> Result<Ctx> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| anyhow!("--config is required for `{command}`"))?;
    let loaded = config::load_config(path)?;
    let mut config = loaded.config;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    // one source of truth for the training seed
    if let Some(train) = config.train.as_mut() {
        train.seed = config.seed;
    }
    let out = common.out_dir(Some(&config));
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    Ok(Ctx {
        seed: config.seed,
        config,
        out,
        workers: common.workers.max(1),
        max_context: common.max_context,
        manifest_paths: loaded.manifest_paths,
        used_paths: Default::default(),
    })
}

impl Ctx {
    /// Resolve a file argument: explicit flag first, then the path recorded
    /// in a replayed manifest. The resolved value is recorded for this run's
    /// own manifest.
    fn resolve_path(&self, key: &str, flag: Option<&Path>) -> Result<PathBuf> {
        let path = match flag {
            Some(p) => p.to_path_buf(),
            None => PathBuf::from(self.manifest_paths.get(key).ok_or_else(|| {
                anyhow!("--{key} is required (or replay a manifest that records it)")
            })?),
        };
        self.used_paths
            .borrow_mut()
            .insert(key.to_string(), path.display().to_string());
        Ok(path)
    }
}

fn write_manifest(ctx: &Ctx, command: &str) -> Result<()> {
    let manifest = Manifest {
        command: command.to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: ctx.seed,
        config_hash: config::config_hash(&ctx.config),
        paths: ctx.used_paths.borrow().clone(),
        config: ctx.config.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(ctx.out.join("manifest.json"), text)?;
    Ok(())
}

fn write_numeric_diagnostics(out: &PathBuf, err: &anyhow::Error) {
    let body = serde_json::json!({ "error": format!("{err:#}") });
    let _ = std::fs::write(
        out.join("diagnostics.json"),
        serde_json::to_string_pretty(&body).unwrap_or_default(),
    );
}

fn sample_prior_dgp(section: &crate::config::PriorSection, seed: u64) -> Result<DgpInstance> {
    let inst = match section.family {
        PriorFamily::Sinusoidal => {
            let (lo, hi) = section.omega.unwrap_or((0.0, 0.0));
            prior::make_sinusoidal_dgp((lo, hi), seed, section.n_rows)?
        }
        PriorFamily::Polynomial => {
            prior::make_polynomial_dgp(section.degree.unwrap_or(1), seed, section.n_rows)?
        }
        PriorFamily::Table => {
            // unspecified knobs are drawn the same way the training prior does
            let knobs = prior::TableKnobs {
                n_covariates: section.n_covariates,
                gamma: section.gamma,
                xi: section.xi,
                propensity_mechanism: section.propensity_mechanism,
                noise_kind: section.noise_kind,
                noise_variance_fraction: section.noise_variance_fraction,
                max_covariates: 8,
            };
            prior::sample_dgp(&prior::resolve_dgp_config(seed, section.n_rows, &knobs))?
        }
    };
    Ok(inst)
}

pub fn simulate(common: &Common) -> Result<()> {
    let ctx = prepare(common, "simulate")?;
    let section = ctx
        .config
        .prior
        .as_ref()
        .ok_or_else(|| anyhow!("config has no `prior` section"))?;
    for i in 0..section.n_dgps {
        let inst = sample_prior_dgp(section, rng::split(ctx.seed, i as u64))?;
        let name = format!("dgp_{i}");
        std::fs::write(
            ctx.out.join(format!("{name}.obs.csv")),
            core_io::obs_csv(&inst.observational()),
        )?;
        std::fs::write(
            ctx.out.join(format!("{name}.truth.csv")),
            core_io::truth_csv(&inst),
        )?;
    }
    write_manifest(&ctx, "simulate")?;
    println!("simulate: wrote {} DGP pairs to {}", section.n_dgps, ctx.out.display());
    Ok(())
}

fn build_sampler(section: &crate::config::PriorSection) -> Box<dyn PriorSampler> {
    match section.family {
        PriorFamily::Sinusoidal => {
            let (lo, hi) = section.omega.unwrap_or((0.0, 0.0));
            Box::new(SinusoidalPrior {
                omega_lo: lo,
                omega_hi: hi,
            })
        }
        PriorFamily::Polynomial => Box::new(PolynomialPrior {
            degree: section.degree.unwrap_or(1),
        }),
        PriorFamily::Table => Box::new(TablePrior {
            max_covariates: section.n_covariates.unwrap_or(8),
        }),
    }
}

pub fn train(common: &Common, resume: Option<&Path>) -> Result<()> {
    let ctx = prepare(common, "train")?;
    let section = ctx
        .config
        .prior
        .as_ref()
        .ok_or_else(|| anyhow!("config has no `prior` section"))?;
    let model_cfg = ctx
        .config
        .model
        .clone()
        .ok_or_else(|| anyhow!("config has no `model` section"))?;
    let train_cfg = ctx
        .config
        .train
        .clone()
        .ok_or_else(|| anyhow!("config has no `train` section"))?;
    let sampler = build_sampler(section);

    let mut trainer = match resume {
        Some(base) => core_io::load_trainer(base)?,
        None => Trainer::new(ModelState::init(model_cfg, rng::split(ctx.seed, 0xA11CE))?),
    };
    let base = ctx.out.join("model");
    let every = train_cfg.checkpoint_every.max(1);
    let result = trainer.run(sampler.as_ref(), &train_cfg, ctx.workers, |t, row| {
        if (row.step + 1) % every == 0 {
            core_io::save_trainer(&base, t)?;
        }
        Ok(())
    });
    let trace = match result {
        Ok(trace) => trace,
        Err(e) => {
            let err = anyhow::Error::from(e);
            write_numeric_diagnostics(&ctx.out, &err);
            return Err(err);
        }
    };
    core_io::save_trainer(&base, &trainer)?;
    std::fs::write(ctx.out.join("trace.csv"), core_io::trace_csv(&trace))?;
    write_manifest(&ctx, "train")?;
    let last = trace.last().map(|r| r.loss).unwrap_or(f64::NAN);
    println!(
        "train: {} steps done, final loss {last:.4}, model at {}",
        trainer.steps_done,
        base.display()
    );
    Ok(())
}

fn estimate_opts(ctx: &Ctx, section: &EvaluateSection) -> EstimateOptions {
    EstimateOptions {
        alpha: section.alpha,
        n_samples: section.n_samples,
        seed: ctx.seed,
        max_context: ctx.max_context,
        workers: ctx.workers,
    }
}

pub fn estimate(common: &Common, model: Option<&Path>, table: Option<&Path>) -> Result<()> {
    let ctx = prepare(common, "estimate")?;
    let section = ctx.config.evaluate.clone().unwrap_or_default();
    let model = ctx.resolve_path("model", model)?;
    let table = ctx.resolve_path("table", table)?;
    let state = core_io::load_model(&model)?;
    let table_text = std::fs::read_to_string(&table)
        .with_context(|| format!("reading table {}", table.display()))?;
    let obs = core_io::parse_obs_csv(&table_text)?;
    let opts = estimate_opts(&ctx, &section);

    let (cates, ate) = match infer::estimate_table(&state, &obs, &opts) {
        Ok(v) => v,
        Err(e) => {
            let e = anyhow::Error::from(e);
            write_numeric_diagnostics(&ctx.out, &e);
            return Err(e);
        }
    };

    let mut csv = String::from("row,cate_point,cate_lo,cate_hi\n");
    for (i, est) in cates.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{i},{},{},{}",
            est.point, est.interval.0, est.interval.1
        );
    }
    std::fs::write(ctx.out.join("estimates.csv"), csv)?;
    let summary = serde_json::json!({
        "ate_point": ate.point,
        "ate_lo": ate.interval.0,
        "ate_hi": ate.interval.1,
        "alpha": ate.alpha,
        "n_context": obs.n(),
    });
    std::fs::write(
        ctx.out.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    write_manifest(&ctx, "estimate")?;
    println!(
        "estimate: ATE {:.4} [{:.4}, {:.4}] over {} rows",
        ate.point, ate.interval.0, ate.interval.1, obs.n()
    );
    Ok(())
}

pub fn calibrate(common: &Common, model: Option<&Path>, table: Option<&Path>) -> Result<()> {
    let ctx = prepare(common, "calibrate")?;
    let section: CalibrateSection = ctx.config.calibrate.clone().unwrap_or_default();
    let model = ctx.resolve_path("model", model)?;
    let table = ctx.resolve_path("table", table)?;
    let state = core_io::load_model(&model)?;
    let obs = core_io::parse_obs_csv(&std::fs::read_to_string(&table)?)?;
    let levels = section
        .levels
        .clone()
        .unwrap_or_else(calib::default_level_grid);
    let temperatures = section
        .temperatures
        .clone()
        .unwrap_or_else(calib::default_temperature_grid);
    let opts = EstimateOptions {
        alpha: 0.05,
        n_samples: section.n_samples,
        seed: ctx.seed,
        max_context: ctx.max_context,
        workers: ctx.workers,
    };

    let before = calib::regression_coverage(&state, &obs, &levels, section.k_folds, &opts)?;
    let tune = calib::tune_temperature(&state, &obs, &temperatures, &levels, section.k_folds, &opts)?;
    let mut calibrated = state.clone();
    calibrated.config.theta_t = tune.theta_t;
    let after = calib::regression_coverage(&calibrated, &obs, &levels, section.k_folds, &opts)?;

    let mut csv = String::from("kind,level,coverage\n");
    for (l, c) in before.curve.levels.iter().zip(&before.curve.coverage) {
        let _ = writeln!(csv, "regression_before,{l},{c}");
    }
    for (l, c) in after.curve.levels.iter().zip(&after.curve.coverage) {
        let _ = writeln!(csv, "regression_after,{l},{c}");
    }
    std::fs::write(ctx.out.join("coverage.csv"), csv)?;

    let body = serde_json::json!({
        "theta_T": tune.theta_t,
        "ice_mu_before": tune.ice_mu_before,
        "ice_mu_after": tune.ice_mu_after,
    });
    std::fs::write(
        ctx.out.join("calibration.json"),
        serde_json::to_string_pretty(&body)?,
    )?;

    let sidecar = core_io::ConfigSidecar {
        version: core_io::CHECKPOINT_VERSION,
        config: calibrated.config.clone(),
    };
    std::fs::write(
        ctx.out.join("calibrated.config.json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;

    let plot = svg::line_plot(
        "regression reliability",
        ((0.0, 1.0), (0.0, 1.0)),
        true,
        &[
            svg::Series {
                label: "before",
                color: "#d62728",
                points: before
                    .curve
                    .levels
                    .iter()
                    .zip(&before.curve.coverage)
                    .map(|(&l, &c)| (l, c))
                    .collect(),
            },
            svg::Series {
                label: "after",
                color: "#1f77b4",
                points: after
                    .curve
                    .levels
                    .iter()
                    .zip(&after.curve.coverage)
                    .map(|(&l, &c)| (l, c))
                    .collect(),
            },
        ],
    );
    std::fs::write(ctx.out.join("reliability.svg"), plot)?;
    write_manifest(&ctx, "calibrate")?;
    println!(
        "calibrate: theta_T {} (ICE {:.4} -> {:.4})",
        tune.theta_t, tune.ice_mu_before, tune.ice_mu_after
    );
    Ok(())
}

fn parse_tau_csv(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().trim();
    if header != "tau" {
        bail!("tau file must have the single-column header `tau`");
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("bad tau value `{l}`"))
        })
        .collect()
}

pub fn qini(
    common: &Common,
    model: Option<&Path>,
    tau: Option<&Path>,
    table: Option<&Path>,
) -> Result<()> {
    let ctx = prepare(common, "qini")?;
    let section = ctx.config.evaluate.clone().unwrap_or_default();
    let table = ctx.resolve_path("table", table)?;
    let obs = core_io::parse_obs_csv(&std::fs::read_to_string(&table)?)?;

    let tau = match tau {
        Some(p) => Some(ctx.resolve_path("tau", Some(p))?),
        None => match ctx.manifest_paths.get("tau") {
            Some(_) => Some(ctx.resolve_path("tau", None)?),
            None => None,
        },
    };
    let model = match model {
        Some(p) => Some(ctx.resolve_path("model", Some(p))?),
        None if tau.is_none() && ctx.manifest_paths.contains_key("model") => {
            Some(ctx.resolve_path("model", None)?)
        }
        None => None,
    };
    let tau_hat: Vec<f64> = match (&tau, &model) {
        (Some(path), _) => {
            let scores = parse_tau_csv(&std::fs::read_to_string(path)?)?;
            if scores.len() != obs.n() {
                bail!(
                    "tau file has {} rows but the table has {}",
                    scores.len(),
                    obs.n()
                );
            }
            scores
        }
        (None, Some(base)) => {
            // out-of-fold CATE points under the stratified k-fold protocol
            let state = core_io::load_model(base)?;
            let opts = estimate_opts(&ctx, &section);
            let splits = eval::stratified_kfold(
                &obs.y,
                &obs.t,
                section.k_folds,
                rng::split(ctx.seed, 7),
            )?;
            let mut scores = vec![0.0; obs.n()];
            for (train_rows, test_rows) in &splits.folds {
                let ctx_table = obs.subset(train_rows);
                let queries: Vec<Vec<f64>> =
                    test_rows.iter().map(|&i| obs.x_row(i).to_vec()).collect();
                let pairs = infer::cate_ppds(&state, &ctx_table, &queries, &opts)?;
                for (&row, (p0, p1)) in test_rows.iter().zip(&pairs) {
                    scores[row] = infer::ppd_mean(p1) - infer::ppd_mean(p0);
                }
            }
            scores
        }
        (None, None) => bail!("qini needs either --tau or --model"),
    };

    let q_grid: Vec<f64> = (1..=section.q_points)
        .map(|i| i as f64 / section.q_points as f64)
        .collect();
    let curve = eval::qini_curve(&obs.y, &obs.t, &tau_hat, &q_grid)?;

    let mut csv = String::from("q,Q,lambda_q,degenerate_flag\n");
    for i in 0..curve.q_grid.len() {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            curve.q_grid[i],
            curve.q_values[i],
            curve.lambda_q[i],
            u8::from(curve.degenerate[i])
        );
    }
    std::fs::write(ctx.out.join("qini.csv"), csv)?;
    std::fs::write(
        ctx.out.join("qini.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "qini_score": curve.qini_score,
            "lambda_full": curve.lambda_full,
        }))?,
    )?;
    let plot = svg::line_plot(
        "qini curve",
        ((0.0, 1.0), (-0.1, 1.1)),
        true,
        &[svg::Series {
            label: "Q(q)",
            color: "#2ca02c",
            points: curve
                .q_grid
                .iter()
                .zip(&curve.q_values)
                .map(|(&q, &v)| (q, v))
                .collect(),
        }],
    );
    std::fs::write(ctx.out.join("qini.svg"), plot)?;
    write_manifest(&ctx, "qini")?;
    println!("qini: score {:.4}", curve.qini_score);
    Ok(())
}

pub fn oracle(common: &Common, counterexample: bool) -> Result<()> {
    let ctx = prepare(common, "oracle")?;
    use tabcause_core::oracle as orc;
    if counterexample {
        let (_, report) = orc::nonidentifiable_counterexample(10_000, rng::split(ctx.seed, 1))?;
        let body = serde_json::json!({
            "consistent": false,
            "posterior": report.posterior,
            "prior": report.prior,
            "posterior_mean_mu1": report.posterior_mean_mu1,
            "posterior_mean_cate": report.posterior_mean_cate,
            "true_cate_confounded": report.true_cate_a,
            "true_cate_randomized": report.true_cate_b,
            "n_rows": report.n_rows,
        });
        std::fs::write(
            ctx.out.join("oracle.json"),
            serde_json::to_string_pretty(&body)?,
        )?;
        write_manifest(&ctx, "oracle")?;
        println!(
            "oracle: counterexample posterior stays at the prior; posterior-mean mu1 = {}",
            report.posterior_mean_mu1
        );
        return Ok(());
    }

    let family = orc::identifiable_bernoulli_family(&[0.2, 0.8])?;
    let truth = &family.parameters[9];
    let rows = orc::consistency_experiment(&family, truth, &[100, 1000, 10_000], 20, ctx.seed)?;
    let mut csv = String::from("n,mean_abs_error,posterior_sd\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{}", r.n, r.mean_abs_error, r.mean_posterior_sd);
    }
    std::fs::write(ctx.out.join("consistency.csv"), csv)?;

    let nonincreasing = rows.windows(2).all(|w| w[1].mean_abs_error <= w[0].mean_abs_error);
    let final_error_ok = rows.last().map(|r| r.mean_abs_error < 0.02).unwrap_or(false);
    let mut kl_dev: f64 = 0.0;
    let mut argmin_ok = true;
    for t in [0u8, 1] {
        let report = orc::kl_equivalence_check(&family, t, 2, 10, rng::split(ctx.seed, t as u64))?;
        kl_dev = kl_dev.max(report.max_deviation);
        argmin_ok &= report.argmin_match;
    }
    let body = serde_json::json!({
        "consistent": nonincreasing && final_error_ok,
        "kl_equiv_max_dev": kl_dev,
        "kl_argmin_match": argmin_ok,
    });
    std::fs::write(
        ctx.out.join("oracle.json"),
        serde_json::to_string_pretty(&body)?,
    )?;
    write_manifest(&ctx, "oracle")?;
    println!(
        "oracle: consistent={} kl_equiv_max_dev={kl_dev:.3e}",
        nonincreasing && final_error_ok
    );
    Ok(())
}

pub fn report(common: &Common) -> Result<()> {
    let dir = common.out_dir(None);
    if !dir.is_dir() {
        bail!("report: {} is not a directory", dir.display());
    }
    let mut artifacts = Vec::new();
    let mut names: Vec<_> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    for name in &names {
        if name.ends_with(".json") && name != "report.json" {
            let text = std::fs::read_to_string(dir.join(name))?;
            let value: serde_json::Value = serde_json::from_str(&text).unwrap_or_default();
            artifacts.push(serde_json::json!({ "file": name, "content": value }));
        } else if name.ends_with(".csv") || name.ends_with(".svg") {
            artifacts.push(serde_json::json!({ "file": name }));
        }
    }
    let body = serde_json::json!({ "dir": dir.display().to_string(), "artifacts": artifacts });
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&body)?)?;
    println!("report: indexed {} artifacts in {}", artifacts.len(), dir.display());
    Ok(())
}
