//! Experiment runner for the `pgcsim-core` model: config parsing, the
//! experiment families, CSV output and plot scripts.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod plots;
pub mod table;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{RunError, RunResult};
pub use table::{ResultRow, Table};
