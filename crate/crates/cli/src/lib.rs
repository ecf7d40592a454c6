//! Experiment runner for the annihilating-walk laboratory: declarative
//! configs, replica fan-out, deterministic reports, and the acceptance
//! suite.

pub mod acceptance;
pub mod config;
pub mod experiments;
pub mod report;
pub mod runner;

pub use config::{ExperimentConfig, ExperimentKind};
pub use experiments::{run_experiment, ExperimentOutput, RunError};
