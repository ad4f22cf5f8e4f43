//! Experiment runner for `lbsoft`: configuration files, reproducible
//! artifact directories and run comparison.

pub mod compare;
pub mod config;
pub mod report;
pub mod run;

pub use compare::{compare, Comparison};
pub use config::{ConfigError, ExperimentConfig, Mode};
pub use run::{run, CliError, RunOptions, RunSummary};
