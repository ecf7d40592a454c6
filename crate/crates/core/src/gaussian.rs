//! Samplers for the Gaussian limit objects: the Brownian sheet on a grid,
//! white noise over rectangles via inclusion-exclusion on the sheet, and
//! the heat-smoothed white-noise field.
//!
//! The sheet is built per orthant from independent cell increments with
//! variance equal to the cell volume, cumulatively summed outward from the
//! coordinate hyperplanes; the `2^d` orthants carry independent copies.
//! The smoothed field is drawn directly from its exact finite-dimensional
//! covariance `C(x, y) = N_{2t}(x - y)` (the Gaussian convolution identity
//! collapses the kernel product integral to a single kernel at doubled
//! time), factorized densely with an escalating diagonal jitter.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::kernels::normal_kernel;
use crate::lattice::Rectangle;

#[derive(Debug, Error, PartialEq)]
pub enum GaussianError {
    #[error("dimension must be between 1 and 3, got {0}")]
    BadDimension(usize),
    #[error("grid axis {0} must be strictly increasing")]
    UnsortedAxis(usize),
    #[error("grid axis {0} must contain 0")]
    MissingOrigin(usize),
    #[error("rectangle vertex {0:?} is not a grid point (no interpolation)")]
    VertexOffGrid(Vec<f64>),
    #[error("rectangle dimension {got} does not match sheet dimension {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("smoothing time must be positive, got {0}")]
    BadTime(f64),
    #[error("grid of {got} points exceeds the dense factorization cap {cap}")]
    GridTooLarge { got: usize, cap: usize },
    #[error(
        "covariance factorization failed for {points} points even at relative jitter {max_jitter:e}"
    )]
    FactorizationFailed { points: usize, max_jitter: f64 },
    #[error("duplicate evaluation points make the covariance singular")]
    DuplicatePoints,
}

const COORD_EPS: f64 = 1e-9;

fn axis_position(axis: &[f64], x: f64) -> Option<usize> {
    axis.iter()
        .position(|&v| (v - x).abs() <= COORD_EPS * v.abs().max(1.0))
}

/// One realization of the Brownian sheet on a rectangular grid.
///
/// Grid points with any zero coordinate carry the exact value 0.
#[derive(Debug, Clone)]
pub struct SheetSample {
    axes: Vec<Vec<f64>>,
    strides: Vec<usize>,
    values: Vec<f64>,
}

impl SheetSample {
    /// Draws the sheet on the product grid of `axes` (each strictly
    /// increasing and containing 0).
    pub fn sample(axes: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Result<Self, GaussianError> {
        let d = axes.len();
        if d == 0 || d > 3 {
            return Err(GaussianError::BadDimension(d));
        }
        for (j, axis) in axes.iter().enumerate() {
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(GaussianError::UnsortedAxis(j));
            }
            if axis_position(axis, 0.0).is_none() {
                return Err(GaussianError::MissingOrigin(j));
            }
        }
        // Split each axis at 0: magnitudes on each side, ascending from 0.
        let mut neg: Vec<Vec<f64>> = Vec::with_capacity(d);
        let mut pos: Vec<Vec<f64>> = Vec::with_capacity(d);
        for axis in axes {
            let zero = axis_position(axis, 0.0).expect("checked");
            neg.push(axis[..zero].iter().rev().map(|&v| -v).collect());
            pos.push(axis[zero + 1..].to_vec());
        }
        let mut strides = Vec::with_capacity(d);
        let mut total = 1usize;
        for axis in axes {
            strides.push(total);
            total *= axis.len();
        }
        let mut values = vec![0.0f64; total];
        // Independent sheet copy per orthant, prefix-summed from the origin.
        for orthant in 0..(1usize << d) {
            let side: Vec<&Vec<f64>> = (0..d)
                .map(|j| {
                    if orthant >> j & 1 == 0 {
                        &pos[j]
                    } else {
                        &neg[j]
                    }
                })
                .collect();
            let dims: Vec<usize> = side.iter().map(|s| s.len()).collect();
            if dims.contains(&0) {
                continue; // orthant collapses onto a hyperplane; all zeros
            }
            let cells: usize = dims.iter().product();
            // W on the orthant's grid nodes (excluding the zero faces) as a
            // d-dimensional prefix sum of N(0, cell volume) increments.
            let mut w = vec![0.0f64; cells];
            let mut idx = vec![0usize; d];
            for flat in 0..cells {
                let mut rem = flat;
                for (j, dim) in dims.iter().enumerate() {
                    idx[j] = rem % dim;
                    rem /= dim;
                }
                let mut vol = 1.0;
                for j in 0..d {
                    let hi = side[j][idx[j]];
                    let lo = if idx[j] == 0 { 0.0 } else { side[j][idx[j] - 1] };
                    vol *= hi - lo;
                }
                let z: f64 = rng.sample(StandardNormal);
                w[flat] = z * vol.sqrt();
            }
            // Prefix sums along each direction turn increments into values.
            for j in 0..d {
                let stride: usize = dims[..j].iter().product();
                let len = dims[j];
                let lines = cells / len;
                for li in 0..lines {
                    let block = li / stride;
                    let within = li % stride;
                    let base = block * stride * len + within;
                    for k in 1..len {
                        let cur = base + k * stride;
                        let prev = base + (k - 1) * stride;
                        w[cur] += w[prev];
                    }
                }
            }
            // Scatter into the full grid.
            let zero_pos: Vec<usize> = axes
                .iter()
                .map(|axis| axis_position(axis, 0.0).expect("checked"))
                .collect();
            for flat in 0..cells {
                let mut rem = flat;
                let mut grid_index = 0usize;
                for (j, dim) in dims.iter().enumerate() {
                    let k = rem % dim;
                    rem /= dim;
                    let axis_idx = if orthant >> j & 1 == 0 {
                        zero_pos[j] + 1 + k
                    } else {
                        zero_pos[j] - 1 - k
                    };
                    grid_index += axis_idx * strides[j];
                }
                values[grid_index] = w[flat];
            }
        }
        Ok(Self {
            axes: axes.to_vec(),
            strides,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    /// Sheet value at a grid point; `None` when the point is off the grid.
    pub fn value_at(&self, point: &[f64]) -> Option<f64> {
        if point.len() != self.dim() {
            return None;
        }
        let mut index = 0usize;
        for (j, &x) in point.iter().enumerate() {
            index += axis_position(&self.axes[j], x)? * self.strides[j];
        }
        Some(self.values[index])
    }
}

/// White-noise mass of a rectangle, `sum_z (-1)^{nu(z)} W(z)` over the
/// rectangle's vertices, where `nu(z)` counts coordinates shared with the
/// all-minimum vertex. Every vertex must lie on the sheet grid.
pub fn white_noise_rectangle(sheet: &SheetSample, rect: &Rectangle) -> Result<f64, GaussianError> {
    let d = sheet.dim();
    if rect.dim() != d {
        return Err(GaussianError::DimensionMismatch {
            got: rect.dim(),
            want: d,
        });
    }
    let mut total = 0.0;
    let mut vertex = vec![0.0f64; d];
    for corner in 0..(1usize << d) {
        let mut nu = 0u32;
        for j in 0..d {
            if corner >> j & 1 == 0 {
                vertex[j] = rect.upper()[j];
            } else {
                vertex[j] = rect.lower()[j];
                nu += 1;
            }
        }
        let w = sheet
            .value_at(&vertex)
            .ok_or_else(|| GaussianError::VertexOffGrid(vertex.clone()))?;
        total += if nu % 2 == 0 { w } else { -w };
    }
    Ok(total)
}

/// Dense cap on the smoothed-field covariance factorization.
pub const SMOOTHED_GRID_CAP: usize = 4096;

/// Relative jitter ladder tried on the covariance diagonal before giving up.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Sampler for the heat-smoothed white-noise field on a fixed set of
/// evaluation points: a centered Gaussian vector with covariance
/// `C(x_i, x_j) = N_{2t}(x_i - x_j)`, optionally scaled by `amplitude`.
#[derive(Debug, Clone)]
pub struct SmoothedFieldSampler {
    t: f64,
    points: Vec<Vec<f64>>,
    chol: Vec<f64>, // lower-triangular factor, row-major n x n
    amplitude: f64,
    jitter_used: f64,
}

impl SmoothedFieldSampler {
    pub fn new(points: &[Vec<f64>], t: f64, amplitude: f64) -> Result<Self, GaussianError> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(GaussianError::BadTime(t));
        }
        let n = points.len();
        if n == 0 || n > SMOOTHED_GRID_CAP {
            return Err(GaussianError::GridTooLarge {
                got: n,
                cap: SMOOTHED_GRID_CAP,
            });
        }
        let d = points[0].len();
        if d == 0 || d > 3 || points.iter().any(|p| p.len() != d) {
            return Err(GaussianError::BadDimension(d));
        }
        for i in 0..n {
            for j in i + 1..n {
                if points[i]
                    .iter()
                    .zip(&points[j])
                    .all(|(a, b)| (a - b).abs() <= COORD_EPS)
                {
                    return Err(GaussianError::DuplicatePoints);
                }
            }
        }
        let mut cov = vec![0.0f64; n * n];
        let mut diff = vec![0.0f64; d];
        for i in 0..n {
            for j in 0..=i {
                for k in 0..d {
                    diff[k] = points[i][k] - points[j][k];
                }
                let c = normal_kernel(&diff, 2.0 * t).expect("t > 0");
                cov[i * n + j] = c;
                cov[j * n + i] = c;
            }
        }
        let diag_scale = cov[0]; // constant diagonal N_{2t}(0)
        let mut result = None;
        let mut jitter_used = 0.0;
        for &jitter in &JITTER_LADDER {
            let mut work = cov.clone();
            for i in 0..n {
                work[i * n + i] += jitter * diag_scale;
            }
            if let Some(l) = cholesky_lower(&work, n) {
                jitter_used = jitter;
                result = Some(l);
                break;
            }
        }
        let chol = result.ok_or(GaussianError::FactorizationFailed {
            points: n,
            max_jitter: *JITTER_LADDER.last().expect("non-empty"),
        })?;
        Ok(Self {
            t,
            points: points.to_vec(),
            chol,
            amplitude,
            jitter_used,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// Pointwise variance of the unscaled field, `(4 pi t)^{-d/2}`.
    pub fn pointwise_variance(&self) -> f64 {
        let d = self.points[0].len();
        (4.0 * std::f64::consts::PI * self.t).powf(-(d as f64) / 2.0)
    }

    /// One field realization over the evaluation points.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.points.len();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut out = vec![0.0f64; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += self.chol[i * n + j] * z[j];
            }
            out[i] = acc * self.amplitude;
        }
        out
    }
}

/// Plain dense Cholesky; returns `None` on a non-positive pivot.
fn cholesky_lower(matrix: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = matrix[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}
