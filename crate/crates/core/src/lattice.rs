//! Periodic lattice geometry: site indexing, neighbor moves, and half-open
//! rectangles with their lattice restrictions.

use thiserror::Error;

/// Maximum supported dimension.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("dimension must be between 1 and 3, got {0}")]
    BadDimension(usize),
    #[error("side length must be at least 2, got {0}")]
    SideTooSmall(u32),
    #[error("rectangle bounds must satisfy lower < upper in every dimension")]
    EmptyRectangle,
    #[error("rectangle dimension {got} does not match lattice dimension {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("rectangle spans {got} sites in dimension {dim}, torus side is {side}")]
    WiderThanTorus { dim: usize, got: u64, side: u32 },
    #[error("rectangle contains no lattice sites")]
    NoSites,
}

/// A finite torus `Z_{L_1} x ... x Z_{L_d}` standing in for `Z^d`.
///
/// Site indices are the row-major linearization of canonical coordinates in
/// `[0, L_j)`; `encode`/`decode` form a bijection between indices and
/// coordinate tuples. All coordinate arithmetic wraps periodically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    sides: Vec<u32>,
    strides: Vec<usize>,
    num_sites: usize,
}

impl Lattice {
    pub fn new(sides: &[u32]) -> Result<Self, LatticeError> {
        if sides.is_empty() || sides.len() > MAX_DIM {
            return Err(LatticeError::BadDimension(sides.len()));
        }
        for &side in sides {
            if side < 2 {
                return Err(LatticeError::SideTooSmall(side));
            }
        }
        let mut strides = Vec::with_capacity(sides.len());
        let mut acc = 1usize;
        for &side in sides {
            strides.push(acc);
            acc = acc.checked_mul(side as usize).expect("lattice too large");
        }
        Ok(Self {
            sides: sides.to_vec(),
            strides,
            num_sites: acc,
        })
    }

    /// Cubic torus of side `l`.
    pub fn cubic(dim: usize, l: u32) -> Result<Self, LatticeError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(LatticeError::BadDimension(dim));
        }
        Self::new(&vec![l; dim])
    }

    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    pub fn sides(&self) -> &[u32] {
        &self.sides
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn min_side(&self) -> u32 {
        *self.sides.iter().min().expect("non-empty")
    }

    /// Row-major site index of (wrapped) coordinates.
    pub fn encode(&self, coords: &[i64]) -> usize {
        debug_assert_eq!(coords.len(), self.dim());
        let mut idx = 0usize;
        for (j, &c) in coords.iter().enumerate() {
            let side = self.sides[j] as i64;
            let wrapped = c.rem_euclid(side) as usize;
            idx += wrapped * self.strides[j];
        }
        idx
    }

    /// Canonical coordinates in `[0, L_j)` of a site index.
    pub fn decode(&self, site: usize) -> Vec<i64> {
        debug_assert!(site < self.num_sites);
        let mut out = Vec::with_capacity(self.dim());
        for j in 0..self.dim() {
            out.push(((site / self.strides[j]) % self.sides[j] as usize) as i64);
        }
        out
    }

    /// Nearest neighbor of `site` in direction `dir` (`dir / 2` picks the
    /// axis, `dir % 2` the sign), wrapping around the torus.
    #[inline]
    pub fn neighbor(&self, site: usize, dir: usize) -> usize {
        let axis = dir >> 1;
        let side = self.sides[axis] as usize;
        let stride = self.strides[axis];
        let coord = (site / stride) % side;
        if dir & 1 == 0 {
            // +1 step
            if coord + 1 == side {
                site - stride * (side - 1)
            } else {
                site + stride
            }
        } else {
            // -1 step
            if coord == 0 {
                site + stride * (side - 1)
            } else {
                site - stride
            }
        }
    }

    /// Signed displacement of `site` from the origin under the minimal-image
    /// convention (each component in `(-L_j/2, L_j/2]`).
    pub fn minimal_image(&self, site: usize) -> Vec<i64> {
        let mut coords = self.decode(site);
        for (j, c) in coords.iter_mut().enumerate() {
            let side = self.sides[j] as i64;
            if *c * 2 > side {
                *c -= side;
            }
        }
        coords
    }
}

/// Axis-aligned rectangle with the half-open convention `(lower_j, upper_j]`
/// in every dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Rectangle {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Rectangle {
    pub fn new(lower: &[f64], upper: &[f64]) -> Result<Self, LatticeError> {
        if lower.is_empty() || lower.len() > MAX_DIM || lower.len() != upper.len() {
            return Err(LatticeError::BadDimension(lower.len()));
        }
        for (lo, hi) in lower.iter().zip(upper) {
            if !(lo < hi) {
                return Err(LatticeError::EmptyRectangle);
            }
        }
        Ok(Self {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
        })
    }

    /// Cube `(-r/2, r/2]^d` centered at the origin.
    pub fn centered_cube(dim: usize, r: f64) -> Result<Self, LatticeError> {
        Self::new(&vec![-r / 2.0; dim], &vec![r / 2.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .product()
    }

    /// Rectangle scaled coordinatewise by `factor > 0`.
    pub fn dilated(&self, factor: f64) -> Self {
        Self {
            lower: self.lower.iter().map(|x| x * factor).collect(),
            upper: self.upper.iter().map(|x| x * factor).collect(),
        }
    }

    pub fn translated(&self, shift: &[f64]) -> Self {
        Self {
            lower: self
                .lower
                .iter()
                .zip(shift)
                .map(|(x, s)| x + s)
                .collect(),
            upper: self
                .upper
                .iter()
                .zip(shift)
                .map(|(x, s)| x + s)
                .collect(),
        }
    }

    /// Membership under the half-open convention.
    pub fn contains(&self, point: &[f64]) -> bool {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(point)
            .all(|((lo, hi), x)| lo < x && x <= hi)
    }

    /// Inclusive integer coordinate ranges of the lattice restriction
    /// `D ∩ Z^d`: per dimension, the integers `n` with `lower_j < n <= upper_j`.
    pub fn lattice_span(&self) -> Result<Vec<(i64, i64)>, LatticeError> {
        let mut spans = Vec::with_capacity(self.dim());
        for (lo, hi) in self.lower.iter().zip(&self.upper) {
            let first = lo.floor() as i64 + 1;
            let last = hi.floor() as i64;
            if last < first {
                return Err(LatticeError::NoSites);
            }
            spans.push((first, last));
        }
        Ok(spans)
    }

    /// Number of lattice sites in the restriction (`|D|`).
    pub fn site_count(&self) -> Result<u64, LatticeError> {
        Ok(self
            .lattice_span()?
            .iter()
            .map(|(lo, hi)| (hi - lo + 1) as u64)
            .product())
    }

    /// Validates that the lattice restriction is non-empty, matches the
    /// lattice dimension, and does not self-overlap when wrapped onto the
    /// torus. Returns the per-dimension spans.
    pub fn checked_span(&self, lattice: &Lattice) -> Result<Vec<(i64, i64)>, LatticeError> {
        if self.dim() != lattice.dim() {
            return Err(LatticeError::DimensionMismatch {
                got: self.dim(),
                want: lattice.dim(),
            });
        }
        let spans = self.lattice_span()?;
        for (j, (lo, hi)) in spans.iter().enumerate() {
            let count = (hi - lo + 1) as u64;
            if count > lattice.sides()[j] as u64 {
                return Err(LatticeError::WiderThanTorus {
                    dim: j,
                    got: count,
                    side: lattice.sides()[j],
                });
            }
        }
        Ok(spans)
    }
}

/// Visits the site index of every lattice point in the given integer spans
/// (inclusive), wrapping onto the torus.
pub fn for_each_site_in_spans<F: FnMut(usize)>(
    lattice: &Lattice,
    spans: &[(i64, i64)],
    mut f: F,
) {
    let d = lattice.dim();
    debug_assert_eq!(spans.len(), d);
    let mut coords = [0i64; MAX_DIM];
    let (lo0, hi0) = spans[0];
    let (lo1, hi1) = if d > 1 { spans[1] } else { (0, 0) };
    let (lo2, hi2) = if d > 2 { spans[2] } else { (0, 0) };
    for c2 in lo2..=hi2 {
        coords[2] = c2;
        for c1 in lo1..=hi1 {
            coords[1] = c1;
            for c0 in lo0..=hi0 {
                coords[0] = c0;
                f(lattice.encode(&coords[..d]));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_dimensions() {
        assert_eq!(Lattice::new(&[]), Err(LatticeError::BadDimension(0)));
        assert_eq!(
            Lattice::new(&[4, 4, 4, 4]),
            Err(LatticeError::BadDimension(4))
        );
        assert_eq!(Lattice::new(&[4, 1]), Err(LatticeError::SideTooSmall(1)));
    }

    #[test]
    fn encode_decode_bijection_exhaustive() {
        for sides in [vec![7], vec![4, 5], vec![3, 4, 2]] {
            let lat = Lattice::new(&sides).unwrap();
            let mut seen = vec![false; lat.num_sites()];
            for site in 0..lat.num_sites() {
                let coords = lat.decode(site);
                assert_eq!(lat.encode(&coords), site);
                assert!(!seen[site]);
                seen[site] = true;
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn encode_wraps_negative_coordinates() {
        let lat = Lattice::new(&[8, 8]).unwrap();
        assert_eq!(lat.encode(&[-1, 0]), lat.encode(&[7, 0]));
        assert_eq!(lat.encode(&[9, -9]), lat.encode(&[1, 7]));
    }

    #[test]
    fn neighbor_round_trips() {
        let lat = Lattice::new(&[5, 4, 3]).unwrap();
        for site in 0..lat.num_sites() {
            for axis in 0..3 {
                let plus = lat.neighbor(site, 2 * axis);
                let minus = lat.neighbor(plus, 2 * axis + 1);
                assert_eq!(minus, site);
            }
        }
    }

    #[test]
    fn neighbor_matches_coordinate_arithmetic() {
        let lat = Lattice::new(&[4, 6]).unwrap();
        for site in 0..lat.num_sites() {
            let coords = lat.decode(site);
            for axis in 0..2 {
                for (dir, step) in [(2 * axis, 1i64), (2 * axis + 1, -1)] {
                    let mut shifted = coords.clone();
                    shifted[axis] += step;
                    assert_eq!(lat.neighbor(site, dir), lat.encode(&shifted));
                }
            }
        }
    }

    #[test]
    fn minimal_image_signs() {
        let lat = Lattice::new(&[8]).unwrap();
        assert_eq!(lat.minimal_image(lat.encode(&[7])), vec![-1]);
        assert_eq!(lat.minimal_image(lat.encode(&[4])), vec![4]);
        assert_eq!(lat.minimal_image(lat.encode(&[5])), vec![-3]);
    }

    #[test]
    fn rectangle_half_open_spans() {
        let r = Rectangle::new(&[0.0], &[8.0]).unwrap();
        assert_eq!(r.lattice_span().unwrap(), vec![(1, 8)]);
        assert_eq!(r.site_count().unwrap(), 8);

        let r = Rectangle::new(&[-0.5, 1.0], &[0.5, 2.0]).unwrap();
        assert_eq!(r.lattice_span().unwrap(), vec![(0, 0), (2, 2)]);

        let r = Rectangle::new(&[0.2], &[0.8]).unwrap();
        assert_eq!(r.lattice_span(), Err(LatticeError::NoSites));
    }

    #[test]
    fn rectangle_wider_than_torus_rejected() {
        let lat = Lattice::new(&[8]).unwrap();
        let r = Rectangle::new(&[0.0], &[9.0]).unwrap();
        assert!(matches!(
            r.checked_span(&lat),
            Err(LatticeError::WiderThanTorus { .. })
        ));
        let r = Rectangle::new(&[0.0], &[8.0]).unwrap();
        assert!(r.checked_span(&lat).is_ok());
    }

    #[test]
    fn dilation_scales_spans() {
        let r = Rectangle::new(&[0.0], &[1.5]).unwrap();
        let d = r.dilated(4.0);
        assert_eq!(d.lattice_span().unwrap(), vec![(1, 6)]);
    }

    #[test]
    fn span_iteration_covers_block() {
        let lat = Lattice::new(&[4, 4]).unwrap();
        let mut sites = Vec::new();
        for_each_site_in_spans(&lat, &[(2, 5), (3, 4)], |s| sites.push(s));
        assert_eq!(sites.len(), 8);
        let mut dedup = sites.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), 8, "wrapped block must not overlap itself");
    }

    proptest! {
        #[test]
        fn prop_encode_decode_identity(
            sides in proptest::collection::vec(2u32..9, 1..=3),
            raw in proptest::collection::vec(-20i64..20, 3),
        ) {
            let lat = Lattice::new(&sides).unwrap();
            let coords = &raw[..lat.dim()];
            let site = lat.encode(coords);
            prop_assert!(site < lat.num_sites());
            prop_assert_eq!(lat.encode(&lat.decode(site)), site);
        }
    }
}
