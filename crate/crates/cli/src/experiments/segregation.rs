//! Segregation trend: the tiled minority fraction at the diffusive box
//! scale must fall with time as single-type regions grow.

use annilab_core::dynamics::advance_through;
use annilab_core::lattice::Lattice;
use annilab_core::observables::{minority_fraction, MetricSeries};

use crate::config::ExperimentConfig;
use crate::report::{CheckLine, Report};
use crate::runner::run_replicas;

use super::{init_state, ExperimentOutput, RunError};

/// Tile side at time `t`: a quarter of the diffusive length, floored at 2
/// sites (single-site tiles are identically 0 under per-site exclusivity
/// and carry no information).
pub fn tile_side(t: f64) -> f64 {
    (t.sqrt() / 4.0).max(2.0)
}

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutput, RunError> {
    let lattice = Lattice::new(cfg.sides.as_ref().expect("validated"))
        .map_err(|e| RunError::analysis("lattice", e))?;
    let times = cfg.times.clone().expect("validated");
    let replicas = cfg.replicas.expect("validated");
    let fixed_side = cfg.box_side;

    let rows = run_replicas(replicas, cfg.seed, |r| {
        let mut state = init_state(cfg, &lattice, r).map_err(|e| e.to_string())?;
        let mut fractions = Vec::with_capacity(times.len());
        let mut err: Option<String> = None;
        advance_through(&mut state, &times, |t, s| {
            let side = fixed_side.unwrap_or_else(|| tile_side(t));
            match minority_fraction(s.field(), side) {
                Ok(stats) => fractions.push(stats.mean),
                Err(e) => err = Some(e.to_string()),
            }
        })
        .map_err(|e| e.to_string())?;
        if let Some(e) = err {
            return Err(e);
        }
        Ok::<_, String>((fractions, state.events()))
    })?;

    let mut series = MetricSeries::new("minority_fraction", times.clone());
    let mut total_events = 0u64;
    for (fractions, events) in rows {
        series
            .push_replica(fractions)
            .map_err(|e| RunError::analysis("series", e))?;
        total_events += events;
    }

    let mut report = Report::new(cfg);
    report
        .push_series(&series, "tiled minority-type fraction")
        .map_err(|e| RunError::analysis("summary", e))?;
    let summary = series
        .summary()
        .map_err(|e| RunError::analysis("summary", e))?;
    let sides_used: Vec<f64> = times
        .iter()
        .map(|&t| fixed_side.unwrap_or_else(|| tile_side(t)))
        .collect();
    report.note(format!("tile sides per time: {sides_used:?}"));

    if summary.len() >= 2 {
        let max_step = summary
            .windows(2)
            .map(|w| w[1].mean - w[0].mean)
            .fold(f64::NEG_INFINITY, f64::max);
        report.push_check(CheckLine::new(
            "segregation-monotone",
            "largest step of the replica-mean minority fraction across times",
            max_step,
            0.0,
            "< 0 (strictly decreasing)",
            max_step < 0.0,
        ));
    }
    let last = summary.last().expect("non-empty");
    report.push_check(CheckLine::new(
        "segregation-final",
        format!("minority fraction at t={}", last.time),
        last.mean,
        0.1,
        "< 0.1",
        last.mean < 0.1,
    ));

    let mut output = ExperimentOutput::new(report);
    output.series = vec![series];
    output.total_events = total_events;
    Ok(output)
}
