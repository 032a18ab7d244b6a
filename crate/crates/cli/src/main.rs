//! End-to-end pipeline binary: simulate causal DGPs, train the in-context
//! estimator, estimate effects, calibrate intervals, evaluate rankings, and
//! verify the exact-posterior oracle — all file-based and deterministic.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "tabcause", version, about = "Amortized causal-effect estimation over tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration (a manifest from a previous run also works).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (defaults to the config's out_dir, then ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for batch-parallel stages; results are identical for
    /// any worker count.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Maximum context rows per forward pass (larger tables are windowed).
    #[arg(long, default_value_t = 512)]
    max_context: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Sample DGPs from the configured prior and write obs/truth CSV pairs.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Train the in-context estimator on the configured prior.
    Train {
        #[command(flatten)]
        common: Common,
        /// Resume from a checkpoint base path (without the .ckpt.json suffix).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Per-row CATE estimates plus the ATE summary for a table.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Model base path (without the .ckpt.json suffix).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Observational CSV (header t,y,x1..xd).
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Tune the softmax temperature against held-out regression coverage.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Qini curve/score for a CATE ranking of an RCT table.
    Qini {
        #[command(flatten)]
        common: Common,
        /// Model base path; CATEs are estimated out-of-fold.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Precomputed per-row CATE scores (single-column CSV with header tau).
        #[arg(long)]
        tau: Option<PathBuf>,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Exact-posterior verification: consistency on an identifiable family,
    /// loss equivalence, and (optionally) the confounded counterexample.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Analyze the observationally-equivalent confounded pair instead.
        #[arg(long)]
        counterexample: bool,
    },
    /// Summarize the manifests and outputs found in a run directory.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { common } => commands::simulate(&common),
        Command::Train { common, resume } => commands::train(&common, resume.as_deref()),
        Command::Estimate { common, model, table } => {
            commands::estimate(&common, model.as_deref(), table.as_deref())
        }
        Command::Calibrate { common, model, table } => {
            commands::calibrate(&common, model.as_deref(), table.as_deref())
        }
        Command::Qini {
            common,
            model,
            tau,
            table,
        } => commands::qini(&common, model.as_deref(), tau.as_deref(), table.as_deref()),
        Command::Oracle {
            common,
            counterexample,
        } => commands::oracle(&common, counterexample),
        Command::Report { common } => commands::report(&common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_class(&err))
        }
    }
}

impl Common {
    fn out_dir(&self, config: Option<&config::RunConfig>) -> PathBuf {
        self.out
            .clone()
            .or_else(|| {
                config
                    .and_then(|c| c.out_dir.as_ref())
                    .map(PathBuf::from)
            })
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}
