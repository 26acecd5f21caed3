//! Reproducible experiment runner for `stablim`: JSON configs in, seeded
//! Monte Carlo runs, `report.json` and CSV artifacts out.

pub mod config;
pub mod error;
pub mod report;
pub mod run;

pub use config::{Experiment, ExperimentConfig, ExperimentKind, GridSpec, SCHEMA};
pub use error::{CliError, CliResult};
pub use report::{RunReport, Verdict};
pub use run::{replay, run};
