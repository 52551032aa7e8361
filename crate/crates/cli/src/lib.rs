//! Experiment driver for the `levy-iterates` engine: bank management, the
//! table, figure and sweep runs, and the validation suites, all configured
//! from one flat key-value file.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::{ExperimentConfig, FieldKind, Overrides, Profile};
pub use error::{CliError, CliResult};
