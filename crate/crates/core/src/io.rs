//! File formats: observational/truth CSVs, loss traces, and versioned JSON
//! checkpoints. CSVs use `\n` line endings and `.` decimals; floats print in
//! shortest round-trip form so reruns are byte-identical.

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelState};
use crate::prior::{DgpInstance, ObservationalTable};
use crate::train::{TraceRow, Trainer};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

/// `<name>.obs.csv`: header `t,y,x1..xd`.
pub fn obs_csv(table: &ObservationalTable) -> String {
    let d = table.n_covariates;
    let mut out = String::from("t,y");
    for j in 1..=d {
        let _ = write!(out, ",x{j}");
    }
    out.push('\n');
    for i in 0..table.n() {
        let _ = write!(out, "{},{}", table.t[i], table.y[i]);
        for v in table.x_row(i) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// `<name>.truth.csv`: header `mu0,mu1,p`, rows aligned with the obs file.
pub fn truth_csv(instance: &DgpInstance) -> String {
    let mut out = String::from("mu0,mu1,p\n");
    for i in 0..instance.n_rows {
        let _ = writeln!(
            out,
            "{},{},{}",
            instance.mu0[i], instance.mu1[i], instance.propensity[i]
        );
    }
    out
}

pub fn parse_obs_csv(text: &str) -> Result<ObservationalTable> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty observational file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    for required in ["t", "y"] {
        if !cols.contains(&required) {
            return Err(Error::Parse(format!(
                "observational header is missing the `{required}` column"
            )));
        }
    }
    let t_col = cols.iter().position(|&c| c == "t").unwrap();
    let y_col = cols.iter().position(|&c| c == "y").unwrap();
    let mut x_cols = Vec::new();
    for j in 1.. {
        match cols.iter().position(|c| *c == format!("x{j}")) {
            Some(idx) => x_cols.push(idx),
            None => break,
        }
    }
    if x_cols.is_empty() {
        return Err(Error::Parse(
            "observational header is missing the `x1` column".into(),
        ));
    }
    let mut t = Vec::new();
    let mut y = Vec::new();
    let mut x = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse(format!("row {}: wrong field count", ln + 2)));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("row {}: bad number `{s}`", ln + 2)))
        };
        let tv = parse(fields[t_col])?;
        if tv != 0.0 && tv != 1.0 {
            return Err(Error::Parse(format!("row {}: t must be 0 or 1", ln + 2)));
        }
        t.push(tv as u8);
        y.push(parse(fields[y_col])?);
        for &c in &x_cols {
            x.push(parse(fields[c])?);
        }
    }
    ObservationalTable::new(x_cols.len(), t, x, y)
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("step,loss,lr,context_len\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.step, r.loss, r.lr, r.context_len);
    }
    out
}

/// Versioned trainer checkpoint: parameters (name -> shape + values),
/// optimizer state, and progress.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub trainer: Trainer,
}

/// Versioned sidecar: model configuration including the (possibly
/// calibrated) inference temperature.
#[derive(Serialize, Deserialize)]
pub struct ConfigSidecar {
    pub version: u32,
    pub config: ModelConfig,
}

pub fn save_trainer(base: &Path, trainer: &Trainer) -> Result<()> {
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        trainer: trainer.clone(),
    };
    let sidecar = ConfigSidecar {
        version: CHECKPOINT_VERSION,
        config: trainer.model.config.clone(),
    };
    std::fs::write(
        with_suffix(base, ".ckpt.json"),
        serde_json::to_string(&ckpt).map_err(|e| Error::Parse(e.to_string()))?,
    )?;
    std::fs::write(
        with_suffix(base, ".config.json"),
        serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Parse(e.to_string()))?,
    )?;
    Ok(())
}

pub fn load_trainer(base: &Path) -> Result<Trainer> {
    let text = std::fs::read_to_string(with_suffix(base, ".ckpt.json"))?;
    let ckpt: Checkpoint =
        serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported checkpoint version {}",
            ckpt.version
        )));
    }
    let mut trainer = ckpt.trainer;
    trainer.model.params.ensure_grad_slots();
    Ok(trainer)
}

/// Load a model for inference; the sidecar's theta_t takes precedence so a
/// calibrated temperature can ride along without touching the weights.
pub fn load_model(base: &Path) -> Result<ModelState> {
    let trainer = load_trainer(base)?;
    let mut state = trainer.model;
    let sidecar_path = with_suffix(base, ".config.json");
    if sidecar_path.exists() {
        let text = std::fs::read_to_string(&sidecar_path)?;
        let sidecar: ConfigSidecar =
            serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        state.config = sidecar.config;
    }
    state.config.validate()?;
    Ok(state)
}

pub fn with_suffix(base: &Path, suffix: &str) -> std::path::PathBuf {
    let mut name = base
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(suffix);
    base.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{make_sinusoidal_dgp, sample_dgp, DgpConfig, NoiseKind, PropensityMechanism};

    #[test]
    fn obs_csv_round_trips() {
        let inst = make_sinusoidal_dgp((0.0, 1.0), 4, 12).unwrap();
        let table = inst.observational();
        let text = obs_csv(&table);
        let parsed = parse_obs_csv(&text).unwrap();
        assert_eq!(parsed, table);
    }

    #[test]
    fn obs_csv_headers() {
        let cfg = DgpConfig {
            seed: 1,
            n_rows: 5,
            n_covariates: 3,
            gamma: 0.5,
            xi: 1.0,
            propensity_mechanism: PropensityMechanism::Rct,
            noise_kind: NoiseKind::None,
            noise_variance_fraction: 0.5,
        };
        let inst = sample_dgp(&cfg).unwrap();
        let text = obs_csv(&inst.observational());
        assert!(text.starts_with("t,y,x1,x2,x3\n"));
        let truth = truth_csv(&inst);
        assert!(truth.starts_with("mu0,mu1,p\n"));
        assert_eq!(truth.lines().count(), 6);
    }

    #[test]
    fn missing_column_is_named() {
        let text = "y,x1\n1.0,2.0\n";
        match parse_obs_csv(text) {
            Err(Error::Parse(msg)) => assert!(msg.contains("`t`")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn checkpoint_roundtrip_preserves_params() {
        let model = ModelState::init(
            ModelConfig {
                n_layers: 1,
                d_model: 8,
                n_heads: 2,
                n_bins: 8,
                max_features: 4,
                base_support: (-10.0, 10.0),
                theta_t: 1.0,
            },
            3,
        )
        .unwrap();
        let trainer = Trainer::new(model);
        let dir = std::env::temp_dir().join(format!("tabcause-io-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let base = dir.join("model");
        save_trainer(&base, &trainer).unwrap();
        let loaded = load_trainer(&base).unwrap();
        for name in trainer.model.params.names() {
            assert_eq!(trainer.model.params.get(name), loaded.model.params.get(name));
        }
        let state = load_model(&base).unwrap();
        assert_eq!(state.config.theta_t, 1.0);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
