//! Command-line harness around `safeshield-core`: experiment configs, file formats,
//! safe-set validation, seed sweeps and result tables.

pub mod config;
pub mod error;
pub mod exec;
pub mod formats;
pub mod plot;
pub mod rollout;
pub mod sets;
pub mod suite;
pub mod validate;

pub use config::{Experiment, ExperimentConfig};
pub use error::{BenchError, Result};
