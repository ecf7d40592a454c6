//! Kernel verification: normalization, per-coordinate variance,
//! Chapman-Kolmogorov composition, and the Gaussian-vs-walk gap scan with
//! its decay-rate bounds.

use annilab_core::kernels::{kernel_gap_scan, walk_kernel_1d, KernelTable};
use annilab_core::observables::MetricSeries;

use crate::config::ExperimentConfig;
use crate::report::{CheckLine, Report};

use super::{ExperimentOutput, RunError};

const NORMALIZATION_TIMES: [f64; 5] = [1.0, 4.0, 16.0, 64.0, 256.0];

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutput, RunError> {
    let dim = cfg.dim.unwrap_or(1);
    let times = cfg.times.clone().expect("validated");
    let trunc = cfg.kernel_truncation();
    let mut report = Report::new(cfg);

    // Normalization: box mass plus recorded tail must be 1 exactly (the
    // walk-kernel tail is computed from exact partial sums).
    let mut worst_norm = 0.0f64;
    let mut worst_tail = 0.0f64;
    for &t in &NORMALIZATION_TIMES {
        let table = KernelTable::walk(1, t, trunc)
            .map_err(|e| RunError::analysis("walk table", e))?;
        worst_norm = worst_norm.max((table.box_sum() + table.tail_mass() - 1.0).abs());
        worst_tail = worst_tail.max(table.tail_mass());
    }
    report.push_check(CheckLine::new(
        "walk-normalization",
        "max |box mass + tail - 1| over probe times",
        worst_norm,
        0.0,
        "<= 1e-12",
        worst_norm <= 1e-12,
    ));
    report.push_check(CheckLine::new(
        "walk-tail-threshold",
        "max recorded tail mass over probe times",
        worst_tail,
        trunc,
        "< truncation threshold",
        worst_tail < trunc,
    ));

    // Per-coordinate variance equals t; tabulated with a deeper truncation
    // so the weighted tail cannot eat into the 1e-8 budget.
    let mut worst_var = 0.0f64;
    for &t in &NORMALIZATION_TIMES {
        let table = KernelTable::walk(1, t, 1e-15)
            .map_err(|e| RunError::analysis("walk table", e))?;
        worst_var = worst_var.max((table.axis_second_moment(0) - t).abs());
    }
    report.push_check(CheckLine::new(
        "walk-variance",
        "max |per-coordinate second moment - t| over probe times",
        worst_var,
        0.0,
        "<= 1e-8",
        worst_var <= 1e-8,
    ));

    // Chapman-Kolmogorov at (s, t) = (1, 3) over |x| <= 8.
    let (s, t) = (1.0, 3.0);
    let mut worst_ck = 0.0f64;
    for x in -8i64..=8 {
        let mut acc = 0.0;
        for y in -60i64..=60 {
            acc += walk_kernel_1d(y, s).map_err(|e| RunError::analysis("kernel", e))?
                * walk_kernel_1d(x - y, t).map_err(|e| RunError::analysis("kernel", e))?;
        }
        let direct =
            walk_kernel_1d(x, s + t).map_err(|e| RunError::analysis("kernel", e))?;
        worst_ck = worst_ck.max((acc - direct).abs());
    }
    report.push_check(CheckLine::new(
        "chapman-kolmogorov",
        "max |composed - direct| kernel at s+t=4 over |x| <= 8",
        worst_ck,
        0.0,
        "<= 1e-10",
        worst_ck <= 1e-10,
    ));

    // Gap scan: Gaussian-vs-walk sup/L1/L2 statistics. The local-CLT bounds
    // cap the decay exponents from below; the symmetric walk actually decays
    // one t^{1/2} power faster per statistic, so the check is one-sided
    // (never slower than the bound, factor-2 slack) plus monotonicity.
    let scan = kernel_gap_scan(dim, &times, trunc)
        .map_err(|e| RunError::analysis("gap scan", e))?;
    let mut sup_series = MetricSeries::new("gap_sup", times.clone());
    let mut l1_series = MetricSeries::new("gap_l1", times.clone());
    let mut l2_series = MetricSeries::new("gap_l2", times.clone());
    sup_series
        .push_replica(scan.iter().map(|g| g.sup).collect())
        .map_err(|e| RunError::analysis("series", e))?;
    l1_series
        .push_replica(scan.iter().map(|g| g.l1).collect())
        .map_err(|e| RunError::analysis("series", e))?;
    l2_series
        .push_replica(scan.iter().map(|g| g.l2).collect())
        .map_err(|e| RunError::analysis("series", e))?;
    report
        .push_series(&sup_series, "sup |normal - walk| over the offset box")
        .map_err(|e| RunError::analysis("summary", e))?;
    report
        .push_series(&l1_series, "sum |normal - walk| over the offset box")
        .map_err(|e| RunError::analysis("summary", e))?;
    report
        .push_series(&l2_series, "sum (normal - walk)^2 over the offset box")
        .map_err(|e| RunError::analysis("summary", e))?;

    let d = dim as f64;
    let exponents = [
        ("sup", (d + 1.0) / 2.0),
        ("l1", 0.5),
        ("l2", d / 2.0 + 1.0),
    ];
    for pair in scan.windows(2) {
        let step = pair[1].t / pair[0].t;
        let measured = [
            ("sup", pair[1].sup / pair[0].sup),
            ("l1", pair[1].l1 / pair[0].l1),
            ("l2", pair[1].l2 / pair[0].l2),
        ];
        for ((label, ratio), (_, exponent)) in measured.iter().zip(&exponents) {
            let bound_ratio = step.powf(-exponent);
            report.push_check(CheckLine::new(
                format!("gap-{label}-rate-t{}-t{}", pair[0].t, pair[1].t),
                format!("{label}-gap ratio across t {} -> {}", pair[0].t, pair[1].t),
                *ratio,
                bound_ratio,
                "<= 2x bound ratio, and decreasing",
                *ratio <= 2.0 * bound_ratio && *ratio < 1.0,
            ));
        }
    }

    // Kernel dump for golden-file regression.
    let dump_table = KernelTable::walk(dim.min(2), times[0], trunc)
        .map_err(|e| RunError::analysis("walk table", e))?;
    let mut dump = Vec::new();
    dump_table
        .write_csv(&mut dump)
        .map_err(|e| RunError::analysis("kernel dump", e))?;

    let mut output = ExperimentOutput::new(report);
    output.series = vec![sup_series, l1_series, l2_series];
    output
        .extra_files
        .push((format!("kernel_walk_t{}.csv", times[0]), dump));
    Ok(output)
}
