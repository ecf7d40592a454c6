//! Occupancy state of the particle system: sparse per-site counts of the
//! two particle types, block statistics over rectangles, and a dense
//! real-valued companion grid for convolutions and field diagnostics.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};
use std::io::{self, Write};

use thiserror::Error;

use crate::lattice::{for_each_site_in_spans, Lattice, LatticeError, Rectangle};

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error(transparent)]
    Geometry(#[from] LatticeError),
    #[error("scaling factor must be >= 1, got {0}")]
    BadScale(f64),
    #[error("field lattices do not match")]
    LatticeMismatch,
    #[error("dense export limited to {limit} sites, lattice has {got}")]
    TooLargeForDense { limit: usize, got: usize },
}

/// SplitMix64 finalizer over the site index; site keys are already
/// well-distributed small integers, so this is collision-safe and much
/// cheaper than the default SipHash in the event loop.
#[derive(Clone, Default)]
pub struct SiteHasher(u64);

impl Hasher for SiteHasher {
    #[inline]
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 ^ u64::from(b)).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        }
    }

    #[inline]
    fn write_u32(&mut self, n: u32) {
        self.write_u64(u64::from(n));
    }

    #[inline]
    fn write_u64(&mut self, n: u64) {
        let mut z = n.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        self.0 = z ^ (z >> 31);
    }

    #[inline]
    fn write_usize(&mut self, n: usize) {
        self.write_u64(n as u64);
    }
}

type SiteMap = HashMap<usize, (u32, u32), BuildHasherDefault<SiteHasher>>;

/// Per-rectangle occupancy summary: per-type counts, the signed count
/// `b - a`, and the minority count `min(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockCounts {
    pub a: i64,
    pub b: i64,
    pub signed: i64,
    pub minority: i64,
}

impl BlockCounts {
    pub fn total(&self) -> i64 {
        self.a + self.b
    }
}

/// Sparse per-site occupancy `(a, b)` on a torus with cached totals.
///
/// The signed view of a site is `b - a`; sites with `(0, 0)` are not stored.
#[derive(Debug, Clone)]
pub struct OccupancyField {
    lattice: Lattice,
    counts: SiteMap,
    total_a: u64,
    total_b: u64,
}

impl OccupancyField {
    pub fn new(lattice: Lattice) -> Self {
        Self {
            lattice,
            counts: SiteMap::default(),
            total_a: 0,
            total_b: 0,
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn totals(&self) -> (u64, u64) {
        (self.total_a, self.total_b)
    }

    pub fn total_particles(&self) -> u64 {
        self.total_a + self.total_b
    }

    #[inline]
    pub fn counts_at(&self, site: usize) -> (u32, u32) {
        self.counts.get(&site).copied().unwrap_or((0, 0))
    }

    #[inline]
    pub fn signed_at(&self, site: usize) -> i64 {
        let (a, b) = self.counts_at(site);
        i64::from(b) - i64::from(a)
    }

    pub fn occupied_len(&self) -> usize {
        self.counts.len()
    }

    /// Occupied sites in unspecified order.
    pub fn occupied(&self) -> impl Iterator<Item = (usize, (u32, u32))> + '_ {
        self.counts.iter().map(|(&site, &c)| (site, c))
    }

    /// Occupied sites sorted by site index (deterministic order).
    pub fn occupied_sorted(&self) -> Vec<(usize, (u32, u32))> {
        let mut entries: Vec<_> = self.occupied().collect();
        entries.sort_unstable_by_key(|&(site, _)| site);
        entries
    }

    pub fn set_site(&mut self, site: usize, a: u32, b: u32) {
        debug_assert!(site < self.lattice.num_sites());
        let (old_a, old_b) = self.counts_at(site);
        self.total_a = self.total_a - u64::from(old_a) + u64::from(a);
        self.total_b = self.total_b - u64::from(old_b) + u64::from(b);
        if a == 0 && b == 0 {
            self.counts.remove(&site);
        } else {
            self.counts.insert(site, (a, b));
        }
    }

    #[inline]
    pub fn add_a(&mut self, site: usize, delta: i32) {
        self.add(site, delta, 0);
    }

    #[inline]
    pub fn add_b(&mut self, site: usize, delta: i32) {
        self.add(site, 0, delta);
    }

    #[inline]
    pub fn add(&mut self, site: usize, da: i32, db: i32) {
        let entry = self.counts.entry(site).or_insert((0, 0));
        let a = entry.0 as i64 + i64::from(da);
        let b = entry.1 as i64 + i64::from(db);
        debug_assert!(a >= 0 && b >= 0, "occupancy went negative");
        entry.0 = a as u32;
        entry.1 = b as u32;
        self.total_a = (self.total_a as i64 + i64::from(da)) as u64;
        self.total_b = (self.total_b as i64 + i64::from(db)) as u64;
        if entry.0 == 0 && entry.1 == 0 {
            self.counts.remove(&site);
        }
    }

    /// Recomputes the totals from scratch (audit path).
    pub fn recompute_totals(&self) -> (u64, u64) {
        let mut a = 0u64;
        let mut b = 0u64;
        for (_, (ca, cb)) in self.occupied() {
            a += u64::from(ca);
            b += u64::from(cb);
        }
        (a, b)
    }

    /// True when no site holds both types (`min(a, b) = 0` everywhere).
    pub fn is_exclusive(&self) -> bool {
        self.occupied().all(|(_, (a, b))| a == 0 || b == 0)
    }

    /// Counts over the lattice restriction of `rect`, wrapped periodically.
    ///
    /// Rejects rectangles that are empty, of the wrong dimension, or wider
    /// than the torus in any direction (wrapping would double-count).
    pub fn block_counts(&self, rect: &Rectangle) -> Result<BlockCounts, FieldError> {
        let spans = rect.checked_span(&self.lattice)?;
        let mut a = 0i64;
        let mut b = 0i64;
        for_each_site_in_spans(&self.lattice, &spans, |site| {
            let (ca, cb) = self.counts_at(site);
            a += i64::from(ca);
            b += i64::from(cb);
        });
        Ok(BlockCounts {
            a,
            b,
            signed: b - a,
            minority: a.min(b),
        })
    }

    /// Signed count of the rectangle dilated by `sqrt(t_scale)`, divided by
    /// `t_scale^{d/4}` (diffusive block scaling).
    pub fn scaled_block(&self, rect: &Rectangle, t_scale: f64) -> Result<f64, FieldError> {
        if !(t_scale >= 1.0) {
            return Err(FieldError::BadScale(t_scale));
        }
        let dilated = rect.dilated(t_scale.sqrt());
        let counts = self.block_counts(&dilated)?;
        let norm = t_scale.powf(self.lattice.dim() as f64 / 4.0);
        Ok(counts.signed as f64 / norm)
    }

    /// Dense CSV snapshot (`site,x0[,x1[,x2]],a,b`) in row-major site order.
    pub fn write_dense_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        const DENSE_LIMIT: usize = 1 << 21;
        let n = self.lattice.num_sites();
        if n > DENSE_LIMIT {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("dense export limited to {DENSE_LIMIT} sites, lattice has {n}"),
            ));
        }
        write!(w, "site")?;
        for j in 0..self.lattice.dim() {
            write!(w, ",x{j}")?;
        }
        writeln!(w, ",a,b")?;
        for site in 0..n {
            let coords = self.lattice.decode(site);
            let (a, b) = self.counts_at(site);
            write!(w, "{site}")?;
            for c in coords {
                write!(w, ",{c}")?;
            }
            writeln!(w, ",{a},{b}")?;
        }
        Ok(())
    }
}

/// Dense real-valued grid over a lattice (convolution outputs, scaled
/// fields, intensity surfaces).
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    lattice: Lattice,
    values: Vec<f64>,
}

impl RealField {
    pub fn zeros(lattice: Lattice) -> Self {
        let n = lattice.num_sites();
        Self {
            lattice,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(lattice: Lattice, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), lattice.num_sites());
        Self { lattice, values }
    }

    /// Signed occupancy `b - a` as a dense grid.
    pub fn from_signed(field: &OccupancyField) -> Self {
        let mut out = Self::zeros(field.lattice().clone());
        for (site, (a, b)) in field.occupied() {
            out.values[site] = f64::from(b) - f64::from(a);
        }
        out
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, site: usize) -> f64 {
        self.values[site]
    }

    /// Sum of `f(value)` over the lattice restriction of `rect`.
    pub fn block_map_sum(
        &self,
        rect: &Rectangle,
        f: impl Fn(f64) -> f64,
    ) -> Result<f64, FieldError> {
        let spans = rect.checked_span(&self.lattice)?;
        let mut acc = 0.0;
        for_each_site_in_spans(&self.lattice, &spans, |site| {
            acc += f(self.values[site]);
        });
        Ok(acc)
    }

    pub fn block_sum(&self, rect: &Rectangle) -> Result<f64, FieldError> {
        self.block_map_sum(rect, |v| v)
    }

    /// CSV export (`x0[,x1[,x2]],value`) in row-major site order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        for j in 0..self.lattice.dim() {
            if j > 0 {
                write!(w, ",")?;
            }
            write!(w, "x{j}")?;
        }
        writeln!(w, ",value")?;
        for site in 0..self.lattice.num_sites() {
            let coords = self.lattice.decode(site);
            for c in coords {
                write!(w, "{c},")?;
            }
            writeln!(w, "{}", self.values[site])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field_1d(l: u32) -> OccupancyField {
        OccupancyField::new(Lattice::new(&[l]).unwrap())
    }

    #[test]
    fn empty_field_block_counts_are_zero() {
        let f = field_1d(16);
        let d = Rectangle::new(&[0.0], &[8.0]).unwrap();
        let c = f.block_counts(&d).unwrap();
        assert_eq!(
            c,
            BlockCounts {
                a: 0,
                b: 0,
                signed: 0,
                minority: 0
            }
        );
    }

    #[test]
    fn block_counts_mixed_sites() {
        let mut f = field_1d(16);
        f.set_site(1, 3, 0);
        f.set_site(2, 0, 2);
        let d = Rectangle::new(&[0.0], &[8.0]).unwrap();
        let c = f.block_counts(&d).unwrap();
        assert_eq!(c.a, 3);
        assert_eq!(c.b, 2);
        assert_eq!(c.signed, -1);
        assert_eq!(c.minority, 2);
    }

    #[test]
    fn single_site_signed_consistency() {
        let mut f = field_1d(16);
        f.set_site(4, 0, 5);
        let d = Rectangle::new(&[3.5], &[4.5]).unwrap();
        let c = f.block_counts(&d).unwrap();
        assert_eq!((c.a, c.b, c.signed, c.minority), (0, 5, 5, 0));
        assert_eq!(c.signed, c.b - c.a);
    }

    #[test]
    fn block_counts_wrap_around() {
        let mut f = field_1d(8);
        f.set_site(7, 1, 0);
        f.set_site(0, 0, 1);
        // (6.5, 8.5] wraps to sites {7, 0}
        let d = Rectangle::new(&[6.5], &[8.5]).unwrap();
        let c = f.block_counts(&d).unwrap();
        assert_eq!((c.a, c.b), (1, 1));
    }

    #[test]
    fn rectangle_wider_than_torus_is_rejected() {
        let f = field_1d(8);
        let d = Rectangle::new(&[0.0], &[9.0]).unwrap();
        assert!(matches!(
            f.block_counts(&d),
            Err(FieldError::Geometry(LatticeError::WiderThanTorus { .. }))
        ));
    }

    #[test]
    fn scaled_block_identity_at_unit_scale() {
        let mut f = field_1d(32);
        f.set_site(2, 0, 4);
        f.set_site(5, 1, 0);
        let d = Rectangle::new(&[0.0], &[8.0]).unwrap();
        let signed = f.block_counts(&d).unwrap().signed;
        let scaled = f.scaled_block(&d, 1.0).unwrap();
        assert_eq!(scaled, signed as f64);
    }

    #[test]
    fn scaled_block_dyadic_examples() {
        // d=1: block of the 4x dilated rectangle holds signed count 6,
        // normalization 16^{1/4} = 2.
        let mut f = field_1d(64);
        for site in 1..=6 {
            f.add_b(site, 1);
        }
        let d = Rectangle::new(&[0.0], &[2.0]).unwrap();
        assert_eq!(f.scaled_block(&d, 16.0).unwrap(), 3.0);

        // d=2: signed count 8 in the dilated block, normalization 16^{1/2} = 4.
        let lat = Lattice::new(&[32, 32]).unwrap();
        let mut f = OccupancyField::new(lat.clone());
        for x in 1..=4 {
            f.add_b(lat.encode(&[x, 1]), 2);
        }
        let d = Rectangle::new(&[0.0, 0.0], &[1.5, 1.0]).unwrap();
        assert_eq!(f.scaled_block(&d, 16.0).unwrap(), 2.0);
    }

    #[test]
    fn scaled_block_rejects_sub_unit_scale() {
        let f = field_1d(16);
        let d = Rectangle::new(&[0.0], &[4.0]).unwrap();
        assert!(matches!(
            f.scaled_block(&d, 0.5),
            Err(FieldError::BadScale(_))
        ));
    }

    #[test]
    fn totals_track_mutations() {
        let mut f = field_1d(16);
        f.set_site(3, 2, 0);
        f.add_b(9, 3);
        f.add_a(3, -1);
        assert_eq!(f.totals(), (1, 3));
        assert_eq!(f.recompute_totals(), f.totals());
        f.add_a(3, -1);
        assert_eq!(f.counts_at(3), (0, 0));
        assert_eq!(f.occupied_len(), 1, "empty sites are dropped");
    }

    #[test]
    fn minority_bounded_by_half_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let lat = Lattice::new(&[12, 12]).unwrap();
        let mut f = OccupancyField::new(lat.clone());
        for site in 0..lat.num_sites() {
            f.set_site(site, rng.gen_range(0..3), rng.gen_range(0..3));
        }
        for _ in 0..50 {
            let lo = rng.gen_range(-6.0..6.0);
            let hi = lo + rng.gen_range(1.0..6.0);
            let d = Rectangle::new(&[lo, lo], &[hi, hi]).unwrap();
            let c = f.block_counts(&d).unwrap();
            assert!(2 * c.minority <= c.total());
        }
    }

    #[test]
    fn exclusive_field_equals_positive_negative_parts() {
        // Under per-site exclusivity the per-type block counts must agree
        // with the positive/negative parts of the signed view.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let lat = Lattice::new(&[40]).unwrap();
        let mut f = OccupancyField::new(lat.clone());
        for site in 0..lat.num_sites() {
            if rng.gen_bool(0.5) {
                f.set_site(site, rng.gen_range(0..4), 0);
            } else {
                f.set_site(site, 0, rng.gen_range(0..4));
            }
        }
        assert!(f.is_exclusive());
        let d = Rectangle::new(&[0.0], &[40.0]).unwrap();
        let c = f.block_counts(&d).unwrap();
        let mut pos = 0i64;
        let mut neg = 0i64;
        for site in 0..lat.num_sites() {
            let s = f.signed_at(site);
            pos += s.max(0);
            neg += (-s).max(0);
        }
        assert_eq!(c.b, pos);
        assert_eq!(c.a, neg);
    }

    #[test]
    fn dense_csv_shape() {
        let lat = Lattice::new(&[2, 2]).unwrap();
        let mut f = OccupancyField::new(lat.clone());
        f.set_site(lat.encode(&[1, 0]), 2, 0);
        let mut buf = Vec::new();
        f.write_dense_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "site,x0,x1,a,b");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[2], "1,1,0,2,0");
    }

    #[test]
    fn real_field_csv_shape() {
        let lat = Lattice::new(&[3]).unwrap();
        let mut rf = RealField::zeros(lat);
        rf.values_mut()[1] = 0.25;
        let mut buf = Vec::new();
        rf.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "x0,value\n0,0\n1,0.25\n2,0\n");
    }

    #[test]
    fn real_field_block_sum_matches_signed_view() {
        let mut f = field_1d(16);
        f.set_site(2, 1, 0);
        f.set_site(3, 0, 4);
        let rf = RealField::from_signed(&f);
        let d = Rectangle::new(&[0.0], &[8.0]).unwrap();
        assert_eq!(
            rf.block_sum(&d).unwrap(),
            f.block_counts(&d).unwrap().signed as f64
        );
        let pos = rf.block_map_sum(&d, |v| v.max(0.0)).unwrap();
        assert_eq!(pos, 4.0);
    }

    proptest! {
        // Additivity over a split rectangle: counts add exactly.
        #[test]
        fn prop_block_additivity(
            seed in 0u64..1000,
            split in 1i64..15,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lat = Lattice::new(&[16]).unwrap();
            let mut f = OccupancyField::new(lat);
            for site in 0..16 {
                f.set_site(site, rng.gen_range(0..3), rng.gen_range(0..3));
            }
            let whole = Rectangle::new(&[0.0], &[16.0]).unwrap();
            let left = Rectangle::new(&[0.0], &[split as f64]).unwrap();
            let right = Rectangle::new(&[split as f64], &[16.0]).unwrap();
            let w = f.block_counts(&whole).unwrap();
            let l = f.block_counts(&left).unwrap();
            let r = f.block_counts(&right).unwrap();
            prop_assert_eq!(w.a, l.a + r.a);
            prop_assert_eq!(w.b, l.b + r.b);
            prop_assert_eq!(w.signed, l.signed + r.signed);
            // Minority is subadditive, not additive.
            prop_assert!(w.minority >= l.minority.max(r.minority));
        }
    }
}
