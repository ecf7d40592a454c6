//! Experiment implementations, one module per kind, behind a single
//! dispatcher. Each experiment validates its config, fans replicas out over
//! the worker pool with deterministic substreams, aggregates metrics, and
//! attaches its canonical verdict lines.

mod blocks;
mod density;
mod gaussian_check;
mod kernel_scan;
mod micro;
mod oracle_check;
mod segregation;
mod simulate;

use annilab_core::dynamics::{replica_rng, DynamicsError, InteractionMode, SimulationState};
use annilab_core::lattice::Lattice;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, ExperimentKind, InitName};
use crate::report::{Manifest, Report};
use crate::runner::ReplicaFailure;

pub use oracle_check::oracle_battery;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Replica(#[from] ReplicaFailure),
    #[error("{0}")]
    Analysis(String),
}

impl RunError {
    pub fn analysis(context: &str, err: impl std::fmt::Display) -> Self {
        RunError::Analysis(format!("{context}: {err}"))
    }
}

/// Everything an experiment produces: the report (metrics + checks), the
/// raw metric series for CSV export, optional extra raw artifacts, and the
/// total event count across replicas.
pub struct ExperimentOutput {
    pub report: Report,
    pub series: Vec<annilab_core::observables::MetricSeries>,
    pub extra_files: Vec<(String, Vec<u8>)>,
    pub total_events: u64,
}

impl ExperimentOutput {
    pub fn new(report: Report) -> Self {
        Self {
            report,
            series: Vec::new(),
            extra_files: Vec::new(),
            total_events: 0,
        }
    }

    pub fn manifest(&self, cfg: &ExperimentConfig) -> Manifest {
        Manifest {
            kind: cfg.kind.name().to_string(),
            mode: cfg.mode.map(|m| format!("{m:?}")),
            lambda: cfg.lambda,
            sides: cfg.sides.clone(),
            seed: cfg.seed,
            replicas: cfg.replicas,
            total_events: self.total_events,
        }
    }
}

/// Builds the initial simulation state for one replica stream.
pub fn init_state(
    cfg: &ExperimentConfig,
    lattice: &Lattice,
    stream: u64,
) -> Result<SimulationState, DynamicsError> {
    let mode = cfg.mode.expect("validated").to_mode();
    let rng = replica_rng(cfg.seed, stream);
    match cfg.init.expect("validated") {
        InitName::Poisson => SimulationState::init_poisson_two_type(
            lattice.clone(),
            cfg.lambda.expect("validated"),
            mode,
            rng,
        ),
        InitName::Full => SimulationState::init_full_single_type(lattice.clone(), mode, rng),
    }
}

pub fn interaction_label(mode: InteractionMode) -> &'static str {
    match mode {
        InteractionMode::TwoTypeAnnihilate => "two-type-annihilate",
        InteractionMode::SingleTypeAnnihilate => "single-type-annihilate",
        InteractionMode::SingleTypeCoalesce => "single-type-coalesce",
        InteractionMode::Free => "free",
    }
}

/// Validates the config and dispatches to the kind's implementation.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, RunError> {
    cfg.validate()?;
    match cfg.kind {
        ExperimentKind::Simulate => simulate::run(cfg),
        ExperimentKind::DensityScan => density::run(cfg),
        ExperimentKind::Theorem1 => blocks::run_macro(cfg),
        ExperimentKind::Theorem3 => blocks::run_sample_path(cfg),
        ExperimentKind::Microscale => micro::run(cfg),
        ExperimentKind::Segregation => segregation::run(cfg),
        ExperimentKind::OracleCheck => oracle_check::run(cfg),
        ExperimentKind::KernelScan => kernel_scan::run(cfg),
        ExperimentKind::GaussianCheck => gaussian_check::run(cfg),
    }
}
