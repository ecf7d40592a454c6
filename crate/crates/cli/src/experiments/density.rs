//! Density decay scan: per-replica density trajectories, the rescaled
//! `t^{d/4} rho(t)` amplitude, and mode-specific decay checks.

use annilab_core::dynamics::advance_through;
use annilab_core::lattice::Lattice;
use annilab_core::observables::{amplitude_series, amplitude_target, density, MetricSeries};
use annilab_core::stats::ols_slope;

use crate::config::{ExperimentConfig, InitName, ModeName};
use crate::report::{CheckLine, Report};
use crate::runner::run_replicas;

use super::{init_state, ExperimentOutput, RunError};

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutput, RunError> {
    let lattice = Lattice::new(cfg.sides.as_ref().expect("validated"))
        .map_err(|e| RunError::analysis("lattice", e))?;
    let times = cfg.times.clone().expect("validated");
    let replicas = cfg.replicas.expect("validated");
    let mode = cfg.mode.expect("validated");
    let dim = cfg.dim.expect("validated");

    let rows = run_replicas(replicas, cfg.seed, |r| {
        let mut state = init_state(cfg, &lattice, r).map_err(|e| e.to_string())?;
        let mut values = Vec::with_capacity(times.len());
        advance_through(&mut state, &times, |_, s| {
            let (rho_a, rho_b) = density(s.field());
            // Per-type density: the two types are exchangeable under the
            // Poisson start, single-type systems live in the B channel.
            values.push(match mode {
                ModeName::TwoTypeAnnihilate | ModeName::Free => 0.5 * (rho_a + rho_b),
                _ => rho_b,
            });
        })
        .map_err(|e| e.to_string())?;
        Ok::<_, String>((values, state.events()))
    })?;

    let mut series = MetricSeries::new("density", times.clone());
    let mut total_events = 0u64;
    for (values, events) in rows {
        series
            .push_replica(values)
            .map_err(|e| RunError::analysis("density series", e))?;
        total_events += events;
    }
    let amplitude = amplitude_series(&series, dim);

    let mut report = Report::new(cfg);
    report
        .push_series(&series, "per-type particle density")
        .map_err(|e| RunError::analysis("summary", e))?;
    report
        .push_series(&amplitude, "t^{d/4}-scaled density amplitude")
        .map_err(|e| RunError::analysis("summary", e))?;

    let density_summary = series
        .summary()
        .map_err(|e| RunError::analysis("summary", e))?;
    let amp_summary = amplitude
        .summary()
        .map_err(|e| RunError::analysis("summary", e))?;
    let t_max = *times.last().expect("non-empty");

    match (mode, cfg.init.expect("validated")) {
        (ModeName::TwoTypeAnnihilate, InitName::Poisson) => {
            let target = amplitude_target(cfg.lambda.expect("validated"), dim);
            report.note(format!(
                "amplitude target (lambda/pi)^(1/2) (4 pi)^(-d/4) = {target:.6}"
            ));
            if dim == 1 {
                let last = amp_summary.last().expect("non-empty");
                report.push_check(CheckLine::new(
                    "density-amplitude",
                    format!("t^{{1/4}} rho(t) at t={t_max}"),
                    last.mean,
                    target,
                    "within 15%",
                    (last.mean - target).abs() <= 0.15 * target,
                ));
            }
            // Log-log slope over the top decade of the time grid.
            let cut = t_max / 16.0;
            let pts: Vec<(f64, f64)> = density_summary
                .iter()
                .filter(|p| p.time >= cut && p.mean > 0.0)
                .map(|p| (p.time.ln(), p.mean.ln()))
                .collect();
            if pts.len() >= 3 {
                let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
                let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
                let (slope, _) =
                    ols_slope(&xs, &ys).map_err(|e| RunError::analysis("slope fit", e))?;
                let target_slope = -(dim as f64) / 4.0;
                let tol = if dim == 1 { 0.02 } else { 0.05 };
                report.push_check(CheckLine::new(
                    "density-decay-slope",
                    format!("log-log density slope over t in [{cut}, {t_max}]"),
                    slope,
                    target_slope,
                    format!("within {tol}"),
                    (slope - target_slope).abs() <= tol,
                ));
            }
        }
        (ModeName::SingleTypeCoalesce, InitName::Full) if dim == 1 => {
            let last = density_summary.last().expect("non-empty");
            let measured = last.mean * (std::f64::consts::PI * t_max).sqrt();
            report.push_check(CheckLine::new(
                "coalescing-decay",
                format!("rho(t) sqrt(pi t) at t={t_max}"),
                measured,
                1.0,
                "in [0.95, 1.05]",
                (0.95..=1.05).contains(&measured),
            ));
        }
        (ModeName::SingleTypeAnnihilate, InitName::Full) if dim == 1 => {
            report.note(
                "single-type annihilating decay is checked against the coalescing run \
                 (density ratio 1/2) by the acceptance suite"
                    .to_string(),
            );
        }
        _ => {}
    }

    let mut output = ExperimentOutput::new(report);
    output.series = vec![series, amplitude];
    output.total_events = total_events;
    Ok(output)
}
