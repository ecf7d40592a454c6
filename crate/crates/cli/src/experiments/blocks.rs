//! Scaled-block experiments at a diffusive horizon `T`: the macroscopic
//! Gaussianity test of the block statistics, and the per-sample-path
//! agreement between late blocks and the smoothed initial field.

use annilab_core::dynamics::replica_rng;
use annilab_core::field::RealField;
use annilab_core::kernels::KernelTable;
use annilab_core::lattice::{Lattice, Rectangle};
use annilab_core::observables::{
    block_variance_target, block_variance_target_gridsum, macro_gaussian_test,
    sample_path_diagnostic, smoothed_block_reference_samples, MetricSeries,
};
use annilab_core::stats::sample_variance;

use crate::config::ExperimentConfig;
use crate::report::{CheckLine, Report};
use crate::runner::run_replicas;

use super::{init_state, ExperimentOutput, RunError};

/// Reference-sampler stream, disjoint from replica streams.
const REFERENCE_STREAM: u64 = 1 << 40;

struct BlockRun {
    scaled_signed: Vec<f64>,
    scaled_a: Vec<f64>,
    scaled_b: Vec<f64>,
    pred_signed: Vec<f64>,
    pred_a: Vec<f64>,
    pred_b: Vec<f64>,
    total_events: u64,
}

/// Runs the replicas to the horizon and collects observed (and, when
/// `with_prediction`, smoothed-initial-field) block statistics.
fn run_blocks(cfg: &ExperimentConfig, with_prediction: bool) -> Result<BlockRun, RunError> {
    let lattice = Lattice::new(cfg.sides.as_ref().expect("validated"))
        .map_err(|e| RunError::analysis("lattice", e))?;
    let dim = cfg.dim.expect("validated");
    let horizon = *cfg.times.as_ref().expect("validated").last().unwrap();
    let rect = Rectangle::new(
        cfg.rect_lower.as_ref().expect("validated"),
        cfg.rect_upper.as_ref().expect("validated"),
    )
    .map_err(|e| RunError::analysis("block rectangle", e))?;
    let block = rect.dilated(horizon.sqrt());
    let norm = horizon.powf(dim as f64 / 4.0);
    let kernel = if with_prediction {
        Some(
            KernelTable::normal(dim, horizon, cfg.kernel_truncation())
                .map_err(|e| RunError::analysis("kernel", e))?,
        )
    } else {
        None
    };
    let replicas = cfg.replicas.expect("validated");
    let rows = run_replicas(replicas, cfg.seed, |r| {
        let mut state = init_state(cfg, &lattice, r).map_err(|e| e.to_string())?;
        let prediction = match &kernel {
            Some(table) => {
                let signed0 = RealField::from_signed(state.field());
                let smoothed = table.convolve(&signed0).map_err(|e| e.to_string())?;
                let total = smoothed.block_sum(&block).map_err(|e| e.to_string())?;
                let pos = smoothed
                    .block_map_sum(&block, |v| v.max(0.0))
                    .map_err(|e| e.to_string())?;
                let neg = smoothed
                    .block_map_sum(&block, |v| (-v).max(0.0))
                    .map_err(|e| e.to_string())?;
                Some((total, neg, pos))
            }
            None => None,
        };
        state.advance(horizon).map_err(|e| e.to_string())?;
        let counts = state.field().block_counts(&block).map_err(|e| e.to_string())?;
        Ok::<_, String>((
            counts.signed as f64,
            counts.a as f64,
            counts.b as f64,
            prediction,
            state.events(),
        ))
    })?;
    let mut run = BlockRun {
        scaled_signed: Vec::with_capacity(replicas),
        scaled_a: Vec::with_capacity(replicas),
        scaled_b: Vec::with_capacity(replicas),
        pred_signed: Vec::new(),
        pred_a: Vec::new(),
        pred_b: Vec::new(),
        total_events: 0,
    };
    for (signed, a, b, prediction, events) in rows {
        run.scaled_signed.push(signed / norm);
        run.scaled_a.push(a / norm);
        run.scaled_b.push(b / norm);
        if let Some((total, neg, pos)) = prediction {
            run.pred_signed.push(total / norm);
            run.pred_a.push(neg / norm);
            run.pred_b.push(pos / norm);
        }
        run.total_events += events;
    }
    Ok(run)
}

/// Macroscopic limit test: the scaled signed block against its Gaussian
/// target variance, and the per-type blocks against sampled references.
pub fn run_macro(cfg: &ExperimentConfig) -> Result<ExperimentOutput, RunError> {
    let lambda = cfg.lambda.expect("validated");
    let horizon = *cfg.times.as_ref().expect("validated").last().unwrap();
    let rect = Rectangle::new(
        cfg.rect_lower.as_ref().expect("validated"),
        cfg.rect_upper.as_ref().expect("validated"),
    )
    .map_err(|e| RunError::analysis("block rectangle", e))?;
    let run = run_blocks(cfg, false)?;

    // Variance target by quadrature, cross-validated by an independent
    // discretization.
    let sigma2 = block_variance_target(lambda, &rect, 1.0);
    let sigma2_grid = block_variance_target_gridsum(lambda, &rect, 1.0, 4096);
    let quadrature_rel = (sigma2 - sigma2_grid).abs() / sigma2;

    let mut reference_rng = replica_rng(cfg.seed, REFERENCE_STREAM);
    let (ref_a, ref_b) = smoothed_block_reference_samples(
        &rect,
        1.0,
        (2.0 * lambda).sqrt(),
        64,
        cfg.reference_samples.expect("validated"),
        &mut reference_rng,
    )
    .map_err(|e| RunError::analysis("reference samples", e))?;

    let macro_report = macro_gaussian_test(
        &run.scaled_signed,
        &run.scaled_a,
        &run.scaled_b,
        &ref_a,
        &ref_b,
        sigma2,
    )
    .map_err(|e| RunError::analysis("macro test", e))?;

    let mut report = Report::new(cfg);
    report.push_check(CheckLine::new(
        "variance-target-quadrature",
        "scaled-block variance target: adaptive vs grid-sum discretization",
        quadrature_rel,
        0.0,
        "< 1e-6 relative",
        quadrature_rel < 1e-6,
    ));
    report.note(format!(
        "scaled-block variance target sigma^2 = {sigma2:.8} (block {:?}..{:?}, horizon {horizon})",
        rect.lower(),
        rect.upper()
    ));
    report.push_check(
        CheckLine::new(
            "signed-block-gaussianity",
            "KS p-value: scaled signed block vs centered normal at target variance",
            macro_report.signed_ks.p_value,
            0.01,
            "p > 0.01",
            macro_report.signed_ks.p_value > 0.01,
        )
        .calibrated(),
    );
    report.push_check(
        CheckLine::new(
            "type-a-block-law",
            "KS p-value: scaled A block vs sampled negative-part reference",
            macro_report.type_a_ks.p_value,
            0.01,
            "p > 0.01",
            macro_report.type_a_ks.p_value > 0.01,
        )
        .calibrated(),
    );
    report.push_check(
        CheckLine::new(
            "type-b-block-law",
            "KS p-value: scaled B block vs sampled positive-part reference",
            macro_report.type_b_ks.p_value,
            0.01,
            "p > 0.01",
            macro_report.type_b_ks.p_value > 0.01,
        )
        .calibrated(),
    );
    let empirical_var = sample_variance(&run.scaled_signed)
        .map_err(|e| RunError::analysis("variance", e))?;
    report.note(format!(
        "empirical scaled-block variance {empirical_var:.5} vs target {sigma2:.5}"
    ));
    let zero_atom = run
        .scaled_signed
        .iter()
        .filter(|v| **v == 0.0)
        .count() as f64
        / run.scaled_signed.len() as f64;
    report.note(format!(
        "KS statistics: signed {:.4}, A {:.4}, B {:.4}; empty-block atom at 0: {:.3} \
         (lattice discreteness; dissolves as the horizon grows)",
        macro_report.signed_ks.statistic,
        macro_report.type_a_ks.statistic,
        macro_report.type_b_ks.statistic,
        zero_atom
    ));

    let mut signed_series = MetricSeries::new("scaled_block_signed", vec![horizon]);
    for v in &run.scaled_signed {
        signed_series
            .push_replica(vec![*v])
            .map_err(|e| RunError::analysis("series", e))?;
    }
    report
        .push_series(&signed_series, "scaled signed block statistic")
        .map_err(|e| RunError::analysis("summary", e))?;

    let mut output = ExperimentOutput::new(report);
    output.series = vec![signed_series];
    output.total_events = run.total_events;
    Ok(output)
}

/// Sample-path agreement test: late block statistics against the smoothed
/// initial field, per replica.
pub fn run_sample_path(cfg: &ExperimentConfig) -> Result<ExperimentOutput, RunError> {
    let dim = cfg.dim.expect("validated");
    let horizon = *cfg.times.as_ref().expect("validated").last().unwrap();
    let run = run_blocks(cfg, true)?;
    let norm = 1.0; // values are already scaled by T^{d/4}
    let signed = sample_path_diagnostic(&run.scaled_signed, &run.pred_signed, norm)
        .map_err(|e| RunError::analysis("signed diagnostic", e))?;
    let type_a = sample_path_diagnostic(&run.scaled_a, &run.pred_a, norm)
        .map_err(|e| RunError::analysis("A diagnostic", e))?;
    let type_b = sample_path_diagnostic(&run.scaled_b, &run.pred_b, norm)
        .map_err(|e| RunError::analysis("B diagnostic", e))?;

    let mut report = Report::new(cfg);
    report.push_check(
        CheckLine::new(
            "signed-block-correlation",
            "Pearson correlation: signed block vs smoothed initial field",
            signed.pearson,
            0.95,
            ">= 0.95",
            signed.pearson >= 0.95,
        )
        .calibrated(),
    );
    report.push_check(
        CheckLine::new(
            "type-a-correlation",
            "Pearson correlation: A block vs negative part of smoothed field",
            type_a.pearson,
            0.9,
            ">= 0.9",
            type_a.pearson >= 0.9,
        )
        .calibrated(),
    );
    report.push_check(
        CheckLine::new(
            "type-b-correlation",
            "Pearson correlation: B block vs positive part of smoothed field",
            type_b.pearson,
            0.9,
            ">= 0.9",
            type_b.pearson >= 0.9,
        )
        .calibrated(),
    );
    report.note(format!(
        "signed pair: rmse/T^{{d/4}} = {:.4}, regression slope = {:.4} (d={dim}, T={horizon})",
        signed.rmse, signed.scale
    ));
    report.note(format!(
        "per-type rmse/T^{{d/4}}: A {:.4}, B {:.4}",
        type_a.rmse, type_b.rmse
    ));

    let mut output = ExperimentOutput::new(report);
    output.total_events = run.total_events;
    Ok(output)
}
