//! Plain simulation runs with dense snapshot exports (replica 0) and the
//! run manifest; the building block for golden-file tests.

use annilab_core::dynamics::run_with_snapshots;
use annilab_core::lattice::Lattice;
use annilab_core::observables::{density, MetricSeries};

use crate::config::ExperimentConfig;
use crate::report::Report;
use crate::runner::run_replicas;

use super::{init_state, ExperimentOutput, RunError};

/// Dense exports are limited to small lattices.
const DENSE_EXPORT_LIMIT: usize = 1 << 21;

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutput, RunError> {
    let lattice = Lattice::new(cfg.sides.as_ref().expect("validated"))
        .map_err(|e| RunError::analysis("lattice", e))?;
    if lattice.num_sites() > DENSE_EXPORT_LIMIT {
        return Err(RunError::Analysis(format!(
            "dense snapshot export limited to {DENSE_EXPORT_LIMIT} sites, lattice has {}",
            lattice.num_sites()
        )));
    }
    let times = cfg.times.clone().expect("validated");
    let replicas = cfg.replicas.expect("validated");

    let rows = run_replicas(replicas, cfg.seed, |r| {
        let mut state = init_state(cfg, &lattice, r).map_err(|e| e.to_string())?;
        let snapshots = run_with_snapshots(&mut state, &times).map_err(|e| e.to_string())?;
        Ok::<_, String>((snapshots, state.events()))
    })?;

    let mut series = MetricSeries::new("density", times.clone());
    let mut total_events = 0u64;
    let mut extra_files = Vec::new();
    for (r, (snapshots, events)) in rows.iter().enumerate() {
        total_events += events;
        let values: Vec<f64> = snapshots
            .iter()
            .map(|(_, field)| {
                let (a, b) = density(field);
                0.5 * (a + b)
            })
            .collect();
        series
            .push_replica(values)
            .map_err(|e| RunError::analysis("series", e))?;
        if r == 0 {
            for (t, field) in snapshots {
                let mut buf = Vec::new();
                field
                    .write_dense_csv(&mut buf)
                    .map_err(|e| RunError::analysis("snapshot export", e))?;
                extra_files.push((format!("snapshot_t{t}.csv"), buf));
            }
        }
    }

    let mut report = Report::new(cfg);
    report
        .push_series(&series, "mean per-type particle density")
        .map_err(|e| RunError::analysis("summary", e))?;
    report.note(format!(
        "snapshots exported for replica 0 at {} times",
        times.len()
    ));
    let mut output = ExperimentOutput::new(report);
    output.series = vec![series];
    output.extra_files = extra_files;
    output.total_events = total_events;
    Ok(output)
}
