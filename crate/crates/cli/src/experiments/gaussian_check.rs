//! Gaussian-field verification: Brownian-sheet moments and hyperplane
//! zeros, white-noise rectangle variance and overlap covariance, and the
//! smoothed-field variance, covariance, time scaling, and Gaussianity.

use annilab_core::dynamics::replica_rng;
use annilab_core::gaussian::{white_noise_rectangle, SheetSample, SmoothedFieldSampler};
use annilab_core::kernels::normal_kernel;
use annilab_core::lattice::Rectangle;
use annilab_core::stats::{ks_test_one_sample, normal_cdf, sample_variance};

use crate::config::ExperimentConfig;
use crate::report::{CheckLine, Report};
use crate::runner::run_replicas;

use super::{ExperimentOutput, RunError};

/// Disjoint RNG stream blocks per sub-experiment.
const STREAM_BLOCK: u64 = 1 << 32;

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutput, RunError> {
    let sheet_samples = cfg.replicas.expect("validated");
    let smoothed_samples = (sheet_samples / 10).max(10_000);
    let mut report = Report::new(cfg);

    // Brownian sheet on a 2-d grid: axis zeros, variance at (1,1), and the
    // covariance of the antidiagonal points (both 1 by the min-product law).
    let axes = vec![vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 2.0]];
    let sheet_rows = run_replicas(sheet_samples, cfg.seed, |r| {
        let mut rng = replica_rng(cfg.seed, r);
        let sheet = SheetSample::sample(&axes, &mut rng).map_err(|e| e.to_string())?;
        let mut axis_max = 0.0f64;
        for &x in &axes[0] {
            axis_max = axis_max.max(sheet.value_at(&[x, 0.0]).unwrap().abs());
            axis_max = axis_max.max(sheet.value_at(&[0.0, x]).unwrap().abs());
        }
        Ok::<_, String>((
            sheet.value_at(&[1.0, 1.0]).unwrap(),
            sheet.value_at(&[1.0, 2.0]).unwrap(),
            sheet.value_at(&[2.0, 1.0]).unwrap(),
            axis_max,
        ))
    })?;
    let n = sheet_rows.len() as f64;
    let w11: Vec<f64> = sheet_rows.iter().map(|r| r.0).collect();
    let var11 = sample_variance(&w11).map_err(|e| RunError::analysis("variance", e))?;
    let var_tol = 3.0 * (2.0 / n).sqrt();
    report.push_check(CheckLine::new(
        "sheet-variance",
        "sheet variance at the unit corner (min-product covariance)",
        var11,
        1.0,
        format!("within {var_tol:.4} (3 sigma)"),
        (var11 - 1.0).abs() <= var_tol,
    ));
    let axis_max = sheet_rows.iter().map(|r| r.3).fold(0.0f64, f64::max);
    report.push_check(CheckLine::new(
        "sheet-axis-zeros",
        "max |sheet| over points with a zero coordinate",
        axis_max,
        0.0,
        "= 0 exactly",
        axis_max == 0.0,
    ));
    let m12 = sheet_rows.iter().map(|r| r.1).sum::<f64>() / n;
    let m21 = sheet_rows.iter().map(|r| r.2).sum::<f64>() / n;
    let cov: f64 = sheet_rows
        .iter()
        .map(|r| (r.1 - m12) * (r.2 - m21))
        .sum::<f64>()
        / (n - 1.0);
    // Var of the product-moment estimator ~ (v1 v2 + cov^2)/n with v = 2.
    let cov_tol = 3.0 * (5.0f64 / n).sqrt();
    report.push_check(CheckLine::new(
        "sheet-covariance",
        "sheet covariance of the antidiagonal unit points",
        cov,
        1.0,
        format!("within {cov_tol:.4} (3 sigma)"),
        (cov - 1.0).abs() <= cov_tol,
    ));

    // White noise over rectangles: variance = volume, overlap covariance =
    // intersection volume. The probe rectangle straddles the origin so the
    // orthant gluing is exercised.
    let wn_axes = vec![vec![-1.0, 0.0, 1.0]];
    let big = Rectangle::new(&[-1.0], &[1.0]).map_err(|e| RunError::analysis("rect", e))?;
    let small = Rectangle::new(&[0.0], &[1.0]).map_err(|e| RunError::analysis("rect", e))?;
    let wn_rows = run_replicas(sheet_samples, cfg.seed, |r| {
        let mut rng = replica_rng(cfg.seed, STREAM_BLOCK + r);
        let sheet = SheetSample::sample(&wn_axes, &mut rng).map_err(|e| e.to_string())?;
        Ok::<_, String>((
            white_noise_rectangle(&sheet, &big).map_err(|e| e.to_string())?,
            white_noise_rectangle(&sheet, &small).map_err(|e| e.to_string())?,
        ))
    })?;
    let phi_big: Vec<f64> = wn_rows.iter().map(|r| r.0).collect();
    let var_big = sample_variance(&phi_big).map_err(|e| RunError::analysis("variance", e))?;
    let vol = big.volume();
    let tol_big = 3.0 * vol * (2.0 / n).sqrt();
    report.push_check(CheckLine::new(
        "white-noise-variance",
        "white-noise rectangle variance vs rectangle volume",
        var_big,
        vol,
        format!("within {tol_big:.4} (3 sigma)"),
        (var_big - vol).abs() <= tol_big,
    ));
    let mb = phi_big.iter().sum::<f64>() / n;
    let ms = wn_rows.iter().map(|r| r.1).sum::<f64>() / n;
    let cov_overlap: f64 = wn_rows
        .iter()
        .map(|r| (r.0 - mb) * (r.1 - ms))
        .sum::<f64>()
        / (n - 1.0);
    let overlap_tol = 3.0 * ((vol * small.volume() + 1.0) / n).sqrt();
    report.push_check(CheckLine::new(
        "white-noise-overlap",
        "white-noise covariance of overlapping rectangles vs overlap volume",
        cov_overlap,
        1.0,
        format!("within {overlap_tol:.4} (3 sigma)"),
        (cov_overlap - 1.0).abs() <= overlap_tol,
    ));

    // Smoothed field at t=1: pointwise variance within 2% (pooled over
    // well-separated points), covariance grid within 3 sigma entrywise,
    // time-scaling ratio, and pointwise Gaussianity.
    let t = 1.0;
    let far_points: Vec<Vec<f64>> = (0..8).map(|i| vec![5.0 * i as f64]).collect();
    let sampler_far = SmoothedFieldSampler::new(&far_points, t, 1.0)
        .map_err(|e| RunError::analysis("sampler", e))?;
    let sampler_far4 = SmoothedFieldSampler::new(&far_points, 4.0 * t, 1.0)
        .map_err(|e| RunError::analysis("sampler", e))?;
    let smooth_rows = run_replicas(smoothed_samples, cfg.seed, |r| {
        let mut rng = replica_rng(cfg.seed, 2 * STREAM_BLOCK + r);
        let v1 = sampler_far.sample(&mut rng);
        let v4 = sampler_far4.sample(&mut rng);
        Ok::<_, String>((v1, v4))
    })?;
    let m = smooth_rows.len() as f64;
    let pooled = |pick: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>| -> f64 {
        let mut acc = 0.0;
        for j in 0..far_points.len() {
            let col: Vec<f64> = smooth_rows.iter().map(|row| pick(row)[j]).collect();
            acc += sample_variance(&col).expect("n >= 2");
        }
        acc / far_points.len() as f64
    };
    let var_t1 = pooled(&|row| &row.0);
    let var_t4 = pooled(&|row| &row.1);
    let target_var = sampler_far.pointwise_variance();
    report.push_check(CheckLine::new(
        "smoothed-pointwise-variance",
        "smoothed-field pointwise variance vs (4 pi t)^(-d/2)",
        var_t1,
        target_var,
        "within 2%",
        (var_t1 - target_var).abs() <= 0.02 * target_var,
    ));
    let ratio = var_t4 / var_t1;
    let ratio_target = 4.0f64.powf(-0.5);
    let ratio_tol = 3.0 * ratio_target * (4.0 / (m * far_points.len() as f64)).sqrt();
    report.push_check(CheckLine::new(
        "smoothed-time-scaling",
        "pointwise variance ratio t -> 4t vs the diffusive rescaling",
        ratio,
        ratio_target,
        format!("within {ratio_tol:.4} (3 sigma)"),
        (ratio - ratio_target).abs() <= ratio_tol,
    ));

    // Covariance grid: 16 points spaced half a correlation length.
    let grid_points: Vec<Vec<f64>> = (0..16).map(|i| vec![0.5 * i as f64]).collect();
    let sampler_grid = SmoothedFieldSampler::new(&grid_points, t, 1.0)
        .map_err(|e| RunError::analysis("sampler", e))?;
    let grid_rows = run_replicas(10_000, cfg.seed, |r| {
        let mut rng = replica_rng(cfg.seed, 3 * STREAM_BLOCK + r);
        Ok::<_, String>(sampler_grid.sample(&mut rng))
    })?;
    let gn = grid_rows.len() as f64;
    let means: Vec<f64> = (0..16)
        .map(|j| grid_rows.iter().map(|row| row[j]).sum::<f64>() / gn)
        .collect();
    let mut worst_cov_z = 0.0f64;
    for i in 0..16 {
        for j in i..16 {
            let mut cov_ij = 0.0;
            for row in &grid_rows {
                cov_ij += (row[i] - means[i]) * (row[j] - means[j]);
            }
            cov_ij /= gn - 1.0;
            let target = normal_kernel(&[0.5 * (j - i) as f64], 2.0 * t)
                .map_err(|e| RunError::analysis("kernel", e))?;
            let var_est = (target_var * target_var + target * target) / gn;
            let z = (cov_ij - target) / var_est.sqrt();
            worst_cov_z = worst_cov_z.max(z.abs());
        }
    }
    report.push_check(CheckLine::new(
        "smoothed-covariance-grid",
        "max |z| of empirical covariance vs doubled-time kernel, 16-point grid",
        worst_cov_z,
        0.0,
        "|z| <= 3 entrywise",
        worst_cov_z <= 3.0,
    ));

    // Pointwise Gaussianity via KS.
    let point_values: Vec<f64> = smooth_rows.iter().map(|row| row.0[0]).collect();
    let sigma = target_var.sqrt();
    let ks = ks_test_one_sample(&point_values, |x| normal_cdf(x, 0.0, sigma))
        .map_err(|e| RunError::analysis("ks", e))?;
    report.push_check(
        CheckLine::new(
            "smoothed-gaussianity",
            "KS p-value of smoothed-field point values vs the normal law",
            ks.p_value,
            0.01,
            "p > 0.01",
            ks.p_value > 0.01,
        )
        .calibrated(),
    );

    report.note(format!(
        "{sheet_samples} sheet samples, {smoothed_samples} smoothed-field samples"
    ));
    Ok(ExperimentOutput::new(report))
}
