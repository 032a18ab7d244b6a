//! Amortized Bayesian causal-effect estimation over tabular data.
//!
//! The pieces, bottom up: [`tensor`] and [`autodiff`] provide an f64
//! reverse-mode engine; [`prior`] simulates identifiable causal DGPs with
//! heterogeneity and positivity knobs; [`model`] is the in-context
//! transformer emitting one quantized CEPO histogram per query; [`train`]
//! fits it with the Gaussian-smoothed histogram loss; [`infer`], [`calib`],
//! and [`eval`] turn predictions into effect estimates, calibrated
//! intervals, and ranking metrics; [`oracle`] cross-checks the whole story
//! with exact posteriors over finite DGP families.

pub mod autodiff;
pub mod calib;
pub mod error;
pub mod eval;
pub mod infer;
pub mod io;
pub mod model;
pub mod oracle;
pub mod prior;
pub mod rng;
pub mod stats;
pub mod svg;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
