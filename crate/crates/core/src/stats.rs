//! Estimator plumbing: replica means with standard errors, one- and
//! two-sample Kolmogorov-Smirnov tests with the asymptotic p-value,
//! chi-square goodness of fit, dispersion index, Pearson correlation, and
//! least-squares slopes.

use statrs::function::erf::erf;
use statrs::function::gamma::gamma_ur;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("samples must be finite")]
    NonFinite,
    #[error("zero variance sample where variation is required")]
    Degenerate,
    #[error("bin counts and expectations must have equal length >= 2")]
    BadBins,
    #[error("expected bin counts must be positive")]
    BadExpectation,
}

/// Sample mean and standard error (`std / sqrt(n)`); requires `n >= 2`.
pub fn mean_se(values: &[f64]) -> Result<(f64, f64), StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFewSamples {
            need: 2,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Unbiased sample variance.
pub fn sample_variance(values: &[f64]) -> Result<f64, StatsError> {
    let (mean, _) = mean_se(values)?;
    let n = values.len() as f64;
    Ok(values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// CDF of `Normal(mu, sigma^2)`.
pub fn normal_cdf(x: f64, mu: f64, sigma: f64) -> f64 {
    std_normal_cdf((x - mu) / sigma)
}

/// CDF of `|Z|` for `Z ~ Normal(0, sigma^2)`.
pub fn half_normal_cdf(x: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        erf(x / (sigma * std::f64::consts::SQRT_2))
    }
}

/// Survival function of the Kolmogorov distribution,
/// `Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsReport {
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: f64,
}

fn ks_p_value(statistic: f64, n_effective: f64) -> f64 {
    let sqrt_n = n_effective.sqrt();
    kolmogorov_sf((sqrt_n + 0.12 + 0.11 / sqrt_n) * statistic)
}

/// One-sample KS test against a continuous CDF; asymptotic p-value, so
/// `n >= 20` is required.
pub fn ks_test_one_sample(
    sample: &[f64],
    cdf: impl Fn(f64) -> f64,
) -> Result<KsReport, StatsError> {
    if sample.len() < 20 {
        return Err(StatsError::TooFewSamples {
            need: 20,
            got: sample.len(),
        });
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = xs.len() as f64;
    let mut stat = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        stat = stat.max((f - lo).abs()).max((hi - f).abs());
    }
    Ok(KsReport {
        statistic: stat,
        p_value: ks_p_value(stat, n),
        n_effective: n,
    })
}

/// Two-sample KS test with the asymptotic p-value at the effective sample
/// size `n1 n2 / (n1 + n2)`.
pub fn ks_test_two_sample(xs: &[f64], ys: &[f64]) -> Result<KsReport, StatsError> {
    if xs.len() < 20 || ys.len() < 20 {
        return Err(StatsError::TooFewSamples {
            need: 20,
            got: xs.len().min(ys.len()),
        });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|u, v| u.partial_cmp(v).expect("finite"));
    b.sort_by(|u, v| u.partial_cmp(v).expect("finite"));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut i = 0usize;
    let mut j = 0usize;
    let mut stat = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        stat = stat.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = na * nb / (na + nb);
    Ok(KsReport {
        statistic: stat,
        p_value: ks_p_value(stat, n_eff),
        n_effective: n_eff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi2Report {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square goodness of fit of observed bin counts against
/// expected counts (`dof = bins - 1`).
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<Chi2Report, StatsError> {
    if observed.len() != expected.len() || observed.len() < 2 {
        return Err(StatsError::BadBins);
    }
    if expected.iter().any(|&e| !(e > 0.0)) {
        return Err(StatsError::BadExpectation);
    }
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            let diff = o as f64 - e;
            diff * diff / e
        })
        .sum();
    let dof = observed.len() - 1;
    let p_value = gamma_ur(dof as f64 / 2.0, stat / 2.0);
    Ok(Chi2Report {
        statistic: stat,
        dof,
        p_value,
    })
}

/// Index of dispersion `S^2 / mean` (sample variance over mean). Zero
/// variance yields 0; a zero mean with variation is rejected.
pub fn dispersion_index(counts: &[f64]) -> Result<f64, StatsError> {
    if counts.len() < 2 {
        return Err(StatsError::TooFewSamples {
            need: 2,
            got: counts.len(),
        });
    }
    let (mean, _) = mean_se(counts)?;
    let var = sample_variance(counts)?;
    if var == 0.0 {
        return Ok(0.0);
    }
    if mean == 0.0 {
        return Err(StatsError::Degenerate);
    }
    Ok(var / mean)
}

/// Pearson correlation coefficient of paired samples.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(StatsError::TooFewSamples {
            need: 2,
            got: xs.len().min(ys.len()),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Degenerate);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Ordinary least-squares slope and intercept of `y` on `x`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), StatsError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(StatsError::TooFewSamples {
            need: 2,
            got: xs.len().min(ys.len()),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx).powi(2);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(StatsError::Degenerate);
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mean_se_of_constant_sample() {
        assert_eq!(mean_se(&[1.0, 1.0, 1.0, 1.0]).unwrap(), (1.0, 0.0));
        assert!(mean_se(&[1.0]).is_err());
    }

    #[test]
    fn uniform_sample_passes_self_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sample: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
        let report = ks_test_one_sample(&sample, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(report.statistic < 0.03, "statistic {}", report.statistic);
        assert!(report.p_value > 0.001, "p {}", report.p_value);
    }

    #[test]
    fn ks_detects_shifted_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sample: Vec<f64> = (0..2_000).map(|_| rng.gen::<f64>() + 0.2).collect();
        let report = ks_test_one_sample(&sample, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(report.p_value < 1e-6);
    }

    #[test]
    fn ks_two_sample_same_source() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..3_000).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..2_000).map(|_| rng.gen::<f64>()).collect();
        let report = ks_test_two_sample(&a, &b).unwrap();
        assert!(report.p_value > 0.001, "p {}", report.p_value);
        let shifted: Vec<f64> = b.iter().map(|x| x + 0.15).collect();
        assert!(ks_test_two_sample(&a, &shifted).unwrap().p_value < 1e-6);
    }

    #[test]
    fn ks_requires_twenty_samples() {
        let short = vec![0.5; 10];
        assert!(matches!(
            ks_test_one_sample(&short, |x| x),
            Err(StatsError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn kolmogorov_sf_reference_points() {
        // Q(0.8275) ~ 0.5 and the 1% critical point Q(1.628) ~ 0.01.
        assert!((kolmogorov_sf(0.8276) - 0.5).abs() < 0.002);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 0.001);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn dispersion_of_constant_counts_is_zero() {
        assert_eq!(dispersion_index(&[4.0, 4.0, 4.0]).unwrap(), 0.0);
    }

    #[test]
    fn dispersion_near_one_for_poisson_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let poisson = rand_distr::Poisson::new(3.0).unwrap();
        let counts: Vec<f64> = (0..10_000)
            .map(|_| rand_distr::Distribution::sample(&poisson, &mut rng))
            .collect();
        let d = dispersion_index(&counts).unwrap();
        assert!((d - 1.0).abs() < 0.05, "dispersion {d}");
    }

    #[test]
    fn chi_square_detects_bias() {
        let observed = [600u64, 400];
        let expected = [500.0, 500.0];
        let report = chi_square_gof(&observed, &expected).unwrap();
        assert!(report.p_value < 1e-6);
        let fair = chi_square_gof(&[505, 495], &expected).unwrap();
        assert!(fair.p_value > 0.5);
    }

    #[test]
    fn pearson_of_identical_series_is_one() {
        let xs = [1.0, 2.0, 5.0, -1.0];
        assert!((pearson(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn slope_recovers_exact_power_law() {
        let ts = [16.0f64, 64.0, 256.0, 1024.0];
        let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
        let ys: Vec<f64> = ts.iter().map(|t| (3.0 * t.powf(-0.25)).ln()).collect();
        let (slope, intercept) = ols_slope(&xs, &ys).unwrap();
        assert!((slope + 0.25).abs() < 1e-12);
        assert!((intercept - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn normal_cdf_symmetry() {
        assert!((std_normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((std_normal_cdf(1.0) + std_normal_cdf(-1.0) - 1.0).abs() < 1e-12);
        assert!((half_normal_cdf(1.0, 1.0) - 0.6826894921370859).abs() < 1e-10);
    }
}
