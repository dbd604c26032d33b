//! Probe trained models by sampling inputs from Gibbs distributions `exp(-G(x)/tau)`
//! built out of the models' own predictions.

pub mod analytic_lr;
pub mod datasets;
pub mod encoding;
pub mod error;
pub mod latent;
pub mod math;
pub mod predictors;
pub mod probing;
pub mod sampler;
pub mod scenarios;
pub mod types;

pub use error::{ProbeError, Result};
