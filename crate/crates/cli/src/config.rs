//! Run configuration: one JSON document with per-stage sections, a global
//! seed, and an output directory. Unknown keys are rejected and numeric
//! ranges are validated at load. A manifest written by a previous run can be
//! passed back as the config; its embedded config is used as-is.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;
use tabcause_core::model::ModelConfig;
use tabcause_core::prior::{NoiseKind, PropensityMechanism};
use tabcause_core::train::TrainConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub prior: Option<PriorSection>,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub calibrate: Option<CalibrateSection>,
    #[serde(default)]
    pub evaluate: Option<EvaluateSection>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub family: PriorFamily,
    #[serde(default = "default_n_dgps")]
    pub n_dgps: usize,
    pub n_rows: usize,
    #[serde(default)]
    pub n_covariates: Option<usize>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub xi: Option<f64>,
    #[serde(default)]
    pub propensity_mechanism: Option<PropensityMechanism>,
    #[serde(default)]
    pub noise_kind: Option<NoiseKind>,
    #[serde(default)]
    pub noise_variance_fraction: Option<f64>,
    /// Sinusoidal frequency range.
    #[serde(default)]
    pub omega: Option<(f64, f64)>,
    /// Polynomial maximum degree.
    #[serde(default)]
    pub degree: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorFamily {
    Table,
    Sinusoidal,
    Polynomial,
}

fn default_n_dgps() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSection {
    #[serde(default = "default_k_folds")]
    pub k_folds: usize,
    #[serde(default)]
    pub levels: Option<Vec<f64>>,
    #[serde(default)]
    pub temperatures: Option<Vec<f64>>,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        CalibrateSection {
            k_folds: default_k_folds(),
            levels: None,
            temperatures: None,
            n_samples: default_n_samples(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    #[serde(default = "default_q_points")]
    pub q_points: usize,
    #[serde(default = "default_k_folds")]
    pub k_folds: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            q_points: default_q_points(),
            k_folds: default_k_folds(),
            alpha: default_alpha(),
            n_samples: default_n_samples(),
        }
    }
}

fn default_k_folds() -> usize {
    5
}
fn default_q_points() -> usize {
    100
}
fn default_alpha() -> f64 {
    0.05
}
fn default_n_samples() -> usize {
    10_000
}

/// Wrapper written next to every command's outputs; sufficient to re-run:
/// feeding it back as --config restores the resolved config, and any file
/// paths the command took on the command line are recorded and re-used when
/// the corresponding flags are omitted.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub code_version: String,
    pub seed: u64,
    pub config_hash: String,
    #[serde(default)]
    pub paths: std::collections::BTreeMap<String, String>,
    pub config: RunConfig,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn config_hash(config: &RunConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    format!("{:016x}", fnv1a(canonical.as_bytes()))
}

/// Loaded configuration plus, when the file was a manifest, the recorded
/// command-line paths.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub manifest_paths: std::collections::BTreeMap<String, String>,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    // a manifest fed back as config: unwrap its embedded config and paths
    let (config_value, manifest_paths) =
        if value.get("command").is_some() && value.get("config").is_some() {
            let paths = value
                .get("paths")
                .and_then(|p| {
                    serde_json::from_value::<std::collections::BTreeMap<String, String>>(p.clone())
                        .ok()
                })
                .unwrap_or_default();
            (value.get("config").unwrap().clone(), paths)
        } else {
            (value, Default::default())
        };
    let config: RunConfig = serde_json::from_value(config_value)
        .with_context(|| format!("validating {}", path.display()))?;
    validate(&config)?;
    Ok(LoadedConfig {
        config,
        manifest_paths,
    })
}

pub fn validate(config: &RunConfig) -> Result<()> {
    if let Some(p) = &config.prior {
        if p.n_rows < 2 {
            bail!("prior.n_rows: need at least 2 rows");
        }
        if p.n_dgps == 0 {
            bail!("prior.n_dgps: must be positive");
        }
        if let Some(g) = p.gamma {
            if !(0.0..=1.0).contains(&g) {
                bail!("prior.gamma: {g} outside [0,1]");
            }
        }
        if let Some(x) = p.xi {
            if !(0.0..=1.0).contains(&x) {
                bail!("prior.xi: {x} outside [0,1]");
            }
        }
        if let Some(v) = p.noise_variance_fraction {
            if !(v > 0.0 && v <= 1.0) {
                bail!("prior.noise_variance_fraction: {v} outside (0,1]");
            }
        }
        match p.family {
            PriorFamily::Sinusoidal => {
                let (lo, hi) = p.omega.unwrap_or((0.0, 0.0));
                if !(0.0..=3.0).contains(&lo) || !(0.0..=3.0).contains(&hi) || lo > hi {
                    bail!("prior.omega: ({lo},{hi}) outside [0,3]");
                }
            }
            PriorFamily::Polynomial => {
                let d = p.degree.unwrap_or(1);
                if !(1..=4).contains(&d) {
                    bail!("prior.degree: {d} outside 1..=4");
                }
            }
            PriorFamily::Table => {}
        }
    }
    if let Some(m) = &config.model {
        m.validate().map_err(|e| anyhow::anyhow!("model.{e}"))?;
    }
    if let Some(t) = &config.train {
        t.validate().map_err(|e| anyhow::anyhow!("train.{e}"))?;
    }
    if let Some(c) = &config.calibrate {
        if c.k_folds < 2 {
            bail!("calibrate.k_folds: must be at least 2");
        }
        if let Some(lv) = &c.levels {
            if lv.len() < 2 || lv.windows(2).any(|w| w[1] <= w[0]) {
                bail!("calibrate.levels: must be an increasing grid");
            }
            if lv.iter().any(|&l| !(0.0 < l && l < 1.0)) {
                bail!("calibrate.levels: values must lie in (0,1)");
            }
        }
        if let Some(tg) = &c.temperatures {
            if tg.is_empty() || tg.iter().any(|&t| !(t > 0.0)) {
                bail!("calibrate.temperatures: must be positive");
            }
        }
    }
    if let Some(e) = &config.evaluate {
        if e.q_points == 0 {
            bail!("evaluate.q_points: must be positive");
        }
        if !(0.0 < e.alpha && e.alpha < 1.0) {
            bail!("evaluate.alpha: {} outside (0,1)", e.alpha);
        }
        if e.k_folds < 2 {
            bail!("evaluate.k_folds: must be at least 2");
        }
    }
    Ok(())
}
