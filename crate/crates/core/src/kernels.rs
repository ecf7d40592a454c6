//! Transition kernels of the continuous-time simple random walk and their
//! Gaussian limit.
//!
//! Each coordinate of a rate-`d` walk on `Z^d` jumps `+1` and `-1` at rate
//! `1/2` independently, so the one-coordinate transition probability is the
//! scaled Bessel value `e^{-t} I_n(t)` and the full kernel factorizes as a
//! product over coordinates. The Gaussian companion is the density of a
//! centered normal with covariance `tI`. Both are tabulated on a truncated
//! offset box with recorded tail mass, convolved against lattice fields by
//! direct summation over the stencil, and compared by the gap scan.

use std::io::{self, Write};

use statrs::function::erf::erfc;
use thiserror::Error;

use crate::field::RealField;
use crate::lattice::Lattice;

/// Default truncation threshold for kernel tails.
pub const DEFAULT_TRUNCATION: f64 = 1e-12;

/// Largest time handled by the direct power series; larger times use the
/// normalized backward recurrence.
const SERIES_T_MAX: f64 = 30.0;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("time must be non-negative and finite, got {0}")]
    BadTime(f64),
    #[error("time must be strictly positive, got {0}")]
    NonPositiveTime(f64),
    #[error("dimension must be between 1 and 3, got {0}")]
    BadDimension(usize),
    #[error("offset dimension {got} does not match kernel dimension {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("truncation threshold must lie in (0, 1), got {0}")]
    BadTruncation(f64),
    #[error(
        "kernel radius {radius} exceeds half the torus side {side} in dimension {dim}; \
         convolution would alias across the wrap"
    )]
    WiderThanHalfTorus { dim: usize, radius: i64, side: u32 },
    #[error("field lattice dimension {got} does not match kernel dimension {want}")]
    FieldMismatch { got: usize, want: usize },
}

/// `e^{-t} I_n(t)` by the defining power series; accurate for `t <= 30`.
fn scaled_bessel_series(n: u32, t: f64) -> f64 {
    let half = t / 2.0;
    let mut term = 1.0f64;
    for j in 1..=n {
        term *= half / f64::from(j);
    }
    if term == 0.0 {
        return 0.0;
    }
    let mut sum = term;
    let mut k = 1u32;
    loop {
        term *= half * half / (f64::from(k) * f64::from(n + k));
        sum += term;
        if term < sum * 1e-17 || k > 700 {
            break;
        }
        k += 1;
    }
    sum * (-t).exp()
}

/// `e^{-t} I_n(t)` for `n = 0..=n_max` by backward recurrence with the
/// normalization `sum_{n in Z} e^{-t} I_n(t) = 1`.
///
/// The downward recurrence `I_{k-1} = I_{k+1} + (2k/t) I_k` is started well
/// above the turning point `k ~ t` with an arbitrary tiny seed; dividing by
/// the accumulated normalization recovers the scaled values directly, which
/// keeps the evaluation overflow-safe for `t` up to `1e6` and beyond.
fn scaled_bessel_table(n_max: usize, t: f64) -> Vec<f64> {
    debug_assert!(t > 0.0);
    let base = t.max(n_max as f64);
    let start = n_max.max(t.ceil() as usize) + (12.0 * base.sqrt()) as usize + 40;
    let mut vals = vec![0.0f64; n_max + 1];
    let mut f_next = 0.0f64; // f_{k+1}
    let mut f_cur = 1e-280f64; // f_k
    let mut norm = 0.0f64;
    let mut k = start;
    loop {
        norm += if k == 0 { f_cur } else { 2.0 * f_cur };
        if k <= n_max {
            vals[k] = f_cur;
        }
        if k == 0 {
            break;
        }
        let f_prev = f_next + (2.0 * k as f64 / t) * f_cur;
        f_next = f_cur;
        f_cur = f_prev;
        k -= 1;
        if f_cur > 1e260 {
            let s = 1e-260;
            f_cur *= s;
            f_next *= s;
            norm *= s;
            for v in &mut vals {
                *v *= s;
            }
        }
    }
    for v in &mut vals {
        *v /= norm;
    }
    vals
}

/// One-coordinate transition probability `e^{-t} I_{|n|}(t)` of the
/// continuous-time walk that jumps `+-1` each at rate `1/2`.
pub fn walk_kernel_1d(n: i64, t: f64) -> Result<f64, KernelError> {
    if !t.is_finite() || t < 0.0 {
        return Err(KernelError::BadTime(t));
    }
    let n = n.unsigned_abs();
    if t == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    if t <= SERIES_T_MAX {
        Ok(scaled_bessel_series(n as u32, t))
    } else {
        let n = n as usize;
        Ok(scaled_bessel_table(n, t)[n])
    }
}

/// Transition probability of the rate-`d` walk on `Z^d`: the product of the
/// one-coordinate kernels.
pub fn walk_kernel(offset: &[i64], t: f64) -> Result<f64, KernelError> {
    if offset.is_empty() || offset.len() > 3 {
        return Err(KernelError::BadDimension(offset.len()));
    }
    let mut p = 1.0;
    for &n in offset {
        p *= walk_kernel_1d(n, t)?;
    }
    Ok(p)
}

/// One-dimensional Gaussian density with variance `t`.
#[inline]
pub fn normal_kernel_1d(x: f64, t: f64) -> f64 {
    (2.0 * std::f64::consts::PI * t).sqrt().recip() * (-x * x / (2.0 * t)).exp()
}

/// Centered normal density with covariance `tI` on `R^d`.
pub fn normal_kernel(x: &[f64], t: f64) -> Result<f64, KernelError> {
    if x.is_empty() || x.len() > 3 {
        return Err(KernelError::BadDimension(x.len()));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(KernelError::NonPositiveTime(t));
    }
    let norm_sq: f64 = x.iter().map(|v| v * v).sum();
    let d = x.len() as f64;
    Ok((2.0 * std::f64::consts::PI * t).powf(-d / 2.0) * (-norm_sq / (2.0 * t)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Walk,
    Normal,
}

/// Truncated tabulation of a kernel on lattice offsets.
///
/// Both kernel families factorize over coordinates, so the table stores one
/// value vector per axis (offsets `-r..=r`) and evaluates products lazily.
/// `tail_mass` records the probability mass outside the truncation box.
#[derive(Debug, Clone)]
pub struct KernelTable {
    kind: KernelKind,
    t: f64,
    radius: Vec<i64>,
    axis_values: Vec<Vec<f64>>,
    tail_mass: f64,
}

impl KernelTable {
    /// Tabulates the walk kernel at time `t`, choosing per-axis the smallest
    /// radius whose exact tail mass (from partial sums) is below `trunc`.
    pub fn walk(dim: usize, t: f64, trunc: f64) -> Result<Self, KernelError> {
        if dim == 0 || dim > 3 {
            return Err(KernelError::BadDimension(dim));
        }
        if !t.is_finite() || t < 0.0 {
            return Err(KernelError::BadTime(t));
        }
        if !(trunc > 0.0 && trunc < 1.0) {
            return Err(KernelError::BadTruncation(trunc));
        }
        let axis = if t == 0.0 {
            vec![1.0]
        } else {
            let n_hi = (t + 12.0 * t.sqrt() + 60.0).ceil() as usize;
            let table: Vec<f64> = if t <= SERIES_T_MAX {
                (0..=n_hi)
                    .map(|n| scaled_bessel_series(n as u32, t))
                    .collect()
            } else {
                scaled_bessel_table(n_hi, t)
            };
            let mut cum = table[0];
            let mut r = 0usize;
            while 1.0 - cum >= trunc && r < n_hi {
                r += 1;
                cum += 2.0 * table[r];
            }
            let mut axis = Vec::with_capacity(2 * r + 1);
            for n in -(r as i64)..=(r as i64) {
                axis.push(table[n.unsigned_abs() as usize]);
            }
            axis
        };
        Ok(Self::from_axis(KernelKind::Walk, dim, t, axis))
    }

    /// Tabulates the normal kernel at time `t > 0` on integer offsets, with
    /// the radius set by the Gaussian tail bound `erfc(r / sqrt(2t)) < trunc`.
    pub fn normal(dim: usize, t: f64, trunc: f64) -> Result<Self, KernelError> {
        if dim == 0 || dim > 3 {
            return Err(KernelError::BadDimension(dim));
        }
        if !(t > 0.0) || !t.is_finite() {
            return Err(KernelError::NonPositiveTime(t));
        }
        if !(trunc > 0.0 && trunc < 1.0) {
            return Err(KernelError::BadTruncation(trunc));
        }
        let mut r = (2.0 * t * (1.0 / trunc).ln()).sqrt().floor() as i64;
        r = r.max(1);
        while erfc(r as f64 / (2.0 * t).sqrt()) >= trunc {
            r += 1;
        }
        let axis: Vec<f64> = (-r..=r).map(|n| normal_kernel_1d(n as f64, t)).collect();
        Ok(Self::from_axis(KernelKind::Normal, dim, t, axis))
    }

    fn from_axis(kind: KernelKind, dim: usize, t: f64, axis: Vec<f64>) -> Self {
        let axis_sum: f64 = axis.iter().sum();
        let covered = axis_sum.min(1.0).powi(dim as i32);
        let radius = (axis.len() as i64 - 1) / 2;
        Self {
            kind,
            t,
            radius: vec![radius; dim],
            axis_values: vec![axis; dim],
            tail_mass: (1.0 - covered).max(0.0),
        }
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.radius.len()
    }

    pub fn radius(&self) -> &[i64] {
        &self.radius
    }

    /// Mass outside the truncation box (exact for the walk kernel, the
    /// Gaussian tail bound for the normal kernel).
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// One-axis values for offsets `-r..=r`.
    pub fn axis(&self, j: usize) -> &[f64] {
        &self.axis_values[j]
    }

    /// Kernel value at a lattice offset; zero outside the truncation box.
    pub fn value(&self, offset: &[i64]) -> Result<f64, KernelError> {
        if offset.len() != self.dim() {
            return Err(KernelError::DimensionMismatch {
                got: offset.len(),
                want: self.dim(),
            });
        }
        let mut p = 1.0;
        for (j, &n) in offset.iter().enumerate() {
            if n.abs() > self.radius[j] {
                return Ok(0.0);
            }
            p *= self.axis_values[j][(n + self.radius[j]) as usize];
        }
        Ok(p)
    }

    /// Sum of all tabulated values over the truncation box.
    pub fn box_sum(&self) -> f64 {
        self.axis_values
            .iter()
            .map(|axis| axis.iter().sum::<f64>())
            .product()
    }

    /// Second moment `sum_n n^2 k(n)` of one axis (the per-coordinate
    /// variance of the tabulated kernel).
    pub fn axis_second_moment(&self, j: usize) -> f64 {
        let r = self.radius[j];
        self.axis_values[j]
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let n = i as i64 - r;
                (n * n) as f64 * v
            })
            .sum()
    }

    /// Periodic convolution `(field * kernel)(x) = sum_y field(x - y) k(y)`
    /// over the torus, evaluated axis by axis (the kernel factorizes).
    ///
    /// Rejected when the stencil would wrap onto itself.
    pub fn convolve(&self, field: &RealField) -> Result<RealField, KernelError> {
        let lattice = field.lattice();
        if lattice.dim() != self.dim() {
            return Err(KernelError::FieldMismatch {
                got: lattice.dim(),
                want: self.dim(),
            });
        }
        for (j, &r) in self.radius.iter().enumerate() {
            let side = lattice.sides()[j];
            if 2 * r + 1 > i64::from(side) {
                return Err(KernelError::WiderThanHalfTorus {
                    dim: j,
                    radius: r,
                    side,
                });
            }
        }
        let n = lattice.num_sites();
        let mut cur = field.values().to_vec();
        let mut line = Vec::new();
        for j in 0..self.dim() {
            let side = lattice.sides()[j] as usize;
            let stride = stride_of(lattice, j);
            let axis = &self.axis_values[j];
            let r = self.radius[j];
            let mut next = vec![0.0f64; n];
            line.resize(side, 0.0);
            let lines = n / side;
            for li in 0..lines {
                // Base site of the li-th line along axis j.
                let block = li / stride;
                let within = li % stride;
                let base = block * stride * side + within;
                for (c, slot) in line.iter_mut().enumerate() {
                    *slot = cur[base + c * stride];
                }
                for c in 0..side {
                    let mut acc = 0.0;
                    for (i, &w) in axis.iter().enumerate() {
                        let k = i as i64 - r;
                        let src = (c as i64 - k).rem_euclid(side as i64) as usize;
                        acc += w * line[src];
                    }
                    next[base + c * stride] = acc;
                }
            }
            cur = next;
        }
        Ok(RealField::from_values(lattice.clone(), cur))
    }

    /// CSV dump (`n0[,n1[,n2]],value`) over the full truncation box.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        for j in 0..self.dim() {
            if j > 0 {
                write!(w, ",")?;
            }
            write!(w, "n{j}")?;
        }
        writeln!(w, ",value")?;
        let r = self.radius.clone();
        let mut offset = vec![0i64; self.dim()];
        self.dump_rec(&mut w, &r, &mut offset, self.dim() - 1)
    }

    fn dump_rec<W: Write>(
        &self,
        w: &mut W,
        r: &[i64],
        offset: &mut Vec<i64>,
        axis: usize,
    ) -> io::Result<()> {
        for n in -r[axis]..=r[axis] {
            offset[axis] = n;
            if axis == 0 {
                let v = self.value(offset).expect("offset in range");
                let mut first = true;
                for &o in offset.iter() {
                    if !first {
                        write!(w, ",")?;
                    }
                    write!(w, "{o}")?;
                    first = false;
                }
                writeln!(w, ",{v}")?;
            } else {
                self.dump_rec(w, r, offset, axis - 1)?;
            }
        }
        Ok(())
    }
}

fn stride_of(lattice: &Lattice, axis: usize) -> usize {
    let mut s = 1usize;
    for j in 0..axis {
        s *= lattice.sides()[j] as usize;
    }
    s
}

/// Gap statistics between the normal and walk kernels over the tabulated
/// window at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapStats {
    pub t: f64,
    /// `sup_x |N_t(x) - K_t(x)|`
    pub sup: f64,
    /// `sum_x |N_t(x) - K_t(x)|`
    pub l1: f64,
    /// `sum_x (N_t(x) - K_t(x))^2`
    pub l2: f64,
}

/// Tabulates both kernels at each requested time and accumulates the
/// sup/L1/L2 gap statistics over the union of the truncation boxes.
pub fn kernel_gap_scan(dim: usize, times: &[f64], trunc: f64) -> Result<Vec<GapStats>, KernelError> {
    if dim == 0 || dim > 2 {
        // The full-box enumeration is only affordable in d <= 2.
        return Err(KernelError::BadDimension(dim));
    }
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if !(t >= 4.0) {
            return Err(KernelError::BadTime(t));
        }
        let walk = KernelTable::walk(dim, t, trunc)?;
        let norm = KernelTable::normal(dim, t, trunc)?;
        let r = walk.radius()[0].max(norm.radius()[0]);
        let mut sup = 0.0f64;
        let mut l1 = 0.0f64;
        let mut l2 = 0.0f64;
        let mut visit = |offset: &[i64]| {
            let kv = walk.value(offset).expect("dim checked");
            let nv = norm.value(offset).expect("dim checked");
            let gap = (nv - kv).abs();
            sup = sup.max(gap);
            l1 += gap;
            l2 += gap * gap;
        };
        match dim {
            1 => {
                for n in -r..=r {
                    visit(&[n]);
                }
            }
            _ => {
                for n0 in -r..=r {
                    for n1 in -r..=r {
                        visit(&[n0, n1]);
                    }
                }
            }
        }
        out.push(GapStats { t, sup, l1, l2 });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Lattice;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const BESSEL_I0_1: f64 = 1.2660658777520084; // I_0(1)
    const BESSEL_I1_1: f64 = 0.5651591039924851; // I_1(1)

    #[test]
    fn walk_kernel_1d_at_zero_time() {
        assert_eq!(walk_kernel_1d(0, 0.0).unwrap(), 1.0);
        assert_eq!(walk_kernel_1d(3, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn walk_kernel_1d_matches_bessel_reference() {
        let expect = (-1.0f64).exp() * BESSEL_I1_1;
        let got = walk_kernel_1d(1, 1.0).unwrap();
        assert!((got - expect).abs() <= 1e-14 * expect);
        assert!((got - 0.2079).abs() < 5e-5);
    }

    #[test]
    fn walk_kernel_1d_sign_symmetry() {
        assert_eq!(
            walk_kernel_1d(-3, 2.0).unwrap(),
            walk_kernel_1d(3, 2.0).unwrap()
        );
    }

    #[test]
    fn walk_kernel_rejects_negative_time() {
        assert!(walk_kernel_1d(0, -0.5).is_err());
    }

    #[test]
    fn walk_kernel_product_structure() {
        assert_eq!(walk_kernel(&[0, 0], 0.0).unwrap(), 1.0);
        let expect = (-1.0f64).exp() * BESSEL_I1_1 * (-1.0f64).exp() * BESSEL_I0_1;
        let got = walk_kernel(&[1, 0], 1.0).unwrap();
        assert!((got - expect).abs() < 1e-14);
        assert!((got - 0.09684).abs() < 5e-5);
    }

    #[test]
    fn series_and_recurrence_agree_across_crossover() {
        for t in [25.0, 30.0, 35.0, 50.0] {
            let table = scaled_bessel_table(60, t);
            for n in 0..=60u32 {
                let series = scaled_bessel_series(n, t);
                let rel = (table[n as usize] - series).abs() / series.max(1e-300);
                assert!(
                    rel < 1e-12,
                    "t={t} n={n}: series {series:e} vs recurrence {:e}",
                    table[n as usize]
                );
            }
        }
    }

    #[test]
    fn scaled_bessel_is_overflow_safe_at_huge_time() {
        let v = walk_kernel_1d(0, 1e6).unwrap();
        // e^{-t} I_0(t) ~ 1/sqrt(2 pi t) for large t.
        let asym = (2.0 * std::f64::consts::PI * 1e6).sqrt().recip();
        assert!(v.is_finite());
        assert!((v - asym).abs() / asym < 1e-4);
    }

    #[test]
    fn walk_table_normalization_and_tail() {
        for t in [1.0, 4.0, 16.0, 64.0, 256.0] {
            let table = KernelTable::walk(1, t, DEFAULT_TRUNCATION).unwrap();
            let total = table.box_sum() + table.tail_mass();
            assert!(
                (total - 1.0).abs() < 1e-12,
                "t={t}: box {} tail {}",
                table.box_sum(),
                table.tail_mass()
            );
            assert!(table.tail_mass() < DEFAULT_TRUNCATION);
        }
    }

    #[test]
    fn walk_table_variance_matches_time() {
        for t in [4.0, 16.0, 64.0] {
            let table = KernelTable::walk(1, t, 1e-14).unwrap();
            let var = table.axis_second_moment(0);
            assert!((var - t).abs() < 1e-8, "t={t}: variance {var}");
        }
    }

    #[test]
    fn chapman_kolmogorov_composition() {
        let (s, t) = (1.0, 3.0);
        let table_s = KernelTable::walk(1, s, 1e-15).unwrap();
        let r = table_s.radius()[0] + 40;
        for x in -8i64..=8 {
            let mut acc = 0.0;
            for y in -r..=r {
                acc += walk_kernel_1d(y, s).unwrap() * walk_kernel_1d(x - y, t).unwrap();
            }
            let direct = walk_kernel_1d(x, s + t).unwrap();
            assert!(
                (acc - direct).abs() < 1e-10,
                "x={x}: composed {acc} direct {direct}"
            );
        }
    }

    #[test]
    fn normal_kernel_reference_values() {
        let inv_sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt().recip();
        assert!((normal_kernel(&[0.0], 1.0).unwrap() - inv_sqrt_2pi).abs() < 1e-15);
        assert!(
            (normal_kernel(&[0.0, 0.0], 1.0).unwrap() - 1.0 / (2.0 * std::f64::consts::PI)).abs()
                < 1e-15
        );
        let expect = inv_sqrt_2pi * (-0.5f64).exp();
        assert!((normal_kernel(&[1.0], 1.0).unwrap() - expect).abs() < 1e-15);
        assert!(normal_kernel(&[0.0], 0.0).is_err());
        assert!(normal_kernel(&[0.0], -1.0).is_err());
    }

    #[test]
    fn normal_table_lattice_sum_is_one() {
        // Lattice sum of N_16 over Z differs from 1 only by the theta-function
        // correction, far below 1e-9.
        let table = KernelTable::normal(1, 16.0, 1e-14).unwrap();
        assert!((table.box_sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn convolve_delta_reproduces_kernel() {
        let lat = Lattice::new(&[64]).unwrap();
        let mut field = RealField::zeros(lat.clone());
        field.values_mut()[0] = 1.0;
        let table = KernelTable::normal(1, 4.0, DEFAULT_TRUNCATION).unwrap();
        let out = table.convolve(&field).unwrap();
        for n in -table.radius()[0]..=table.radius()[0] {
            let site = lat.encode(&[n]);
            let expect = table.value(&[n]).unwrap();
            assert!((out.get(site) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn convolve_constant_preserves_level() {
        let lat = Lattice::new(&[32, 32]).unwrap();
        let c = 2.5;
        let field = RealField::from_values(lat.clone(), vec![c; lat.num_sites()]);
        let table = KernelTable::normal(2, 2.0, DEFAULT_TRUNCATION).unwrap();
        let out = table.convolve(&field).unwrap();
        let expect = c * table.box_sum();
        for &v in out.values() {
            assert!((v - expect).abs() < 1e-12);
            assert!((v - c).abs() < 1e-9);
        }
    }

    #[test]
    fn convolve_rejects_wide_kernel() {
        let lat = Lattice::new(&[16]).unwrap();
        let field = RealField::zeros(lat);
        let table = KernelTable::normal(1, 16.0, DEFAULT_TRUNCATION).unwrap();
        assert!(matches!(
            table.convolve(&field),
            Err(KernelError::WiderThanHalfTorus { .. })
        ));
    }

    #[test]
    fn gap_scan_ratios_respect_local_clt_bounds() {
        let scan = kernel_gap_scan(1, &[16.0, 64.0], DEFAULT_TRUNCATION).unwrap();
        let sup_ratio = scan[1].sup / scan[0].sup;
        let l1_ratio = scan[1].l1 / scan[0].l1;
        let l2_ratio = scan[1].l2 / scan[0].l2;
        println!("gap ratios across 4x: sup {sup_ratio} l1 {l1_ratio} l2 {l2_ratio}");
        // The d=1 local-CLT bounds are sup <= C t^{-1}, L1 <= C t^{-1/2},
        // L2 <= C t^{-3/2}; for this walk the third cumulant vanishes, so the
        // actual decay is one power of t^{1/2} faster per statistic. The
        // bound is respected when the measured ratio does not exceed twice
        // the bound's ratio across a dyadic step.
        assert!(sup_ratio <= 2.0 * 0.25, "sup ratio {sup_ratio}");
        assert!(l1_ratio <= 2.0 * 0.5, "l1 ratio {l1_ratio}");
        assert!(l2_ratio <= 2.0 * 0.125, "l2 ratio {l2_ratio}");
        // Measured decay sits near the symmetric-walk rates.
        assert!((sup_ratio - 0.125).abs() < 0.05, "sup ratio {sup_ratio}");
        assert!((l1_ratio - 0.25).abs() < 0.08, "l1 ratio {l1_ratio}");
        assert!((l2_ratio - 0.03125).abs() < 0.02, "l2 ratio {l2_ratio}");
        for s in &scan {
            assert!(s.sup > 0.0 && s.l1 > 0.0 && s.l2 > 0.0);
            assert!(s.sup.is_finite() && s.l1.is_finite() && s.l2.is_finite());
        }
    }

    #[test]
    fn off_by_one_stencil_is_detected_by_moment_checks() {
        // Fault injection: shifting the tabulated stencil by one slot keeps
        // the mass but breaks the odd/even moments far beyond the suite's
        // tolerances, so a corrupted kernel cannot pass silently.
        let table = KernelTable::walk(1, 16.0, 1e-14).unwrap();
        let r = table.radius()[0];
        let axis = table.axis(0);
        let mut first_moment = 0.0;
        let mut second_moment = 0.0;
        for (i, &v) in axis.iter().enumerate() {
            let shifted = (i as i64 - r) + 1; // off-by-one offset labels
            first_moment += shifted as f64 * v;
            second_moment += (shifted * shifted) as f64 * v;
        }
        assert!(first_moment.abs() > 0.99, "shift shows up in the mean");
        assert!(
            (second_moment - 16.0).abs() > 0.99,
            "variance check catches the shift: {second_moment}"
        );
    }

    #[test]
    fn kernel_csv_dump_is_well_formed() {
        let table = KernelTable::walk(1, 1.0, 1e-6).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("n0,value"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len() as i64, 2 * table.radius()[0] + 1);
    }

    proptest! {
        // Convolution is linear in the field with integer weights.
        #[test]
        fn prop_convolution_linearity(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lat = Lattice::new(&[32]).unwrap();
            let table = KernelTable::normal(1, 2.0, 1e-10).unwrap();
            let mut f = RealField::zeros(lat.clone());
            let mut g = RealField::zeros(lat.clone());
            for _ in 0..8 {
                let site = rng.gen_range(0..lat.num_sites());
                f.values_mut()[site] += f64::from(rng.gen_range(-3i32..=3));
                let site = rng.gen_range(0..lat.num_sites());
                g.values_mut()[site] += f64::from(rng.gen_range(-3i32..=3));
            }
            let mut sum = f.clone();
            for (s, gv) in sum.values_mut().iter_mut().zip(g.values()) {
                *s += gv;
            }
            let conv_sum = table.convolve(&sum).unwrap();
            let conv_f = table.convolve(&f).unwrap();
            let conv_g = table.convolve(&g).unwrap();
            for site in 0..lat.num_sites() {
                let lhs = conv_sum.get(site);
                let rhs = conv_f.get(site) + conv_g.get(site);
                prop_assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }
}
