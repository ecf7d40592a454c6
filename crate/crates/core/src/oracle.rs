//! Brute-force transient solver for tiny systems.
//!
//! Enumerates every occupancy configuration reachable from a set of initial
//! configurations, builds the jump-chain generator (one single-particle
//! move per transition, rate `1/2` per direction per particle, with the
//! interaction rule applied at the destination), and evaluates the
//! transient distribution by uniformization. The transition rules are
//! written out independently of the event engine so the two can certify
//! each other.

use std::collections::HashMap;

use thiserror::Error;

use crate::dynamics::InteractionMode;
use crate::field::OccupancyField;
use crate::lattice::Lattice;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("state space exceeded the cap of {cap} states (reached {got})")]
    StateSpaceOverflow { cap: usize, got: usize },
    #[error("initial configuration set is empty")]
    NoInitialStates,
    #[error("initial distribution has {got} entries, generator has {want} states")]
    DistributionMismatch { got: usize, want: usize },
    #[error("initial distribution must be non-negative and sum to 1 (sum {0})")]
    BadDistribution(f64),
    #[error("time must be non-negative, got {0}")]
    BadTime(f64),
    #[error("uniformization horizon too large (rate * t = {0:e})")]
    HorizonTooLarge(f64),
    #[error("initial configurations do not match lattice/mode")]
    BadInitial,
}

/// Default cap on the enumerated state space.
pub const DEFAULT_STATE_CAP: usize = 200_000;

type StateVec = Vec<(u32, u32)>;

/// Generator of the occupancy jump chain on an enumerated state space.
///
/// `rows[i]` holds the off-diagonal rates out of state `i`; `diag[i]` is the
/// negative row sum, so every row sums to zero.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    lattice: Lattice,
    mode: InteractionMode,
    states: Vec<StateVec>,
    index: HashMap<StateVec, usize>,
    rows: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

fn field_to_state(field: &OccupancyField) -> StateVec {
    (0..field.lattice().num_sites())
        .map(|s| field.counts_at(s))
        .collect()
}

/// Applies one single-particle move to a configuration and resolves the
/// landing under `mode`. `is_a` selects the moving type.
fn resolve_move(
    state: &StateVec,
    site: usize,
    is_a: bool,
    dest: usize,
    mode: InteractionMode,
) -> StateVec {
    let mut next = state.clone();
    if is_a {
        next[site].0 -= 1;
    } else {
        next[site].1 -= 1;
    }
    let (da, db) = next[dest];
    match mode {
        InteractionMode::Free => {
            if is_a {
                next[dest].0 += 1;
            } else {
                next[dest].1 += 1;
            }
        }
        InteractionMode::TwoTypeAnnihilate => {
            if is_a && db > 0 {
                next[dest].1 -= 1;
            } else if !is_a && da > 0 {
                next[dest].0 -= 1;
            } else if is_a {
                next[dest].0 += 1;
            } else {
                next[dest].1 += 1;
            }
        }
        InteractionMode::SingleTypeAnnihilate => {
            if db > 0 {
                next[dest].1 -= 1;
            } else {
                next[dest].1 += 1;
            }
        }
        InteractionMode::SingleTypeCoalesce => {
            if db == 0 {
                next[dest].1 += 1;
            }
        }
    }
    next
}

impl GeneratorMatrix {
    /// Enumerates all configurations reachable from `initial` and assembles
    /// the generator. Rejected if the reachable set exceeds `cap`.
    pub fn build(
        lattice: Lattice,
        mode: InteractionMode,
        initial: &[OccupancyField],
        cap: usize,
    ) -> Result<Self, OracleError> {
        if initial.is_empty() {
            return Err(OracleError::NoInitialStates);
        }
        let mut states: Vec<StateVec> = Vec::new();
        let mut index: HashMap<StateVec, usize> = HashMap::new();
        let mut frontier: Vec<usize> = Vec::new();
        for field in initial {
            if field.lattice() != &lattice {
                return Err(OracleError::BadInitial);
            }
            let key = field_to_state(field);
            if !index.contains_key(&key) {
                index.insert(key.clone(), states.len());
                frontier.push(states.len());
                states.push(key);
            }
        }
        let dirs = 2 * lattice.dim();
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut diag: Vec<f64> = Vec::new();
        let mut cursor = 0usize;
        while cursor < states.len() {
            let state = states[cursor].clone();
            let mut row: HashMap<usize, f64> = HashMap::new();
            for site in 0..state.len() {
                let (a, b) = state[site];
                for (is_a, count) in [(true, a), (false, b)] {
                    if count == 0 {
                        continue;
                    }
                    for dir in 0..dirs {
                        let dest = lattice.neighbor(site, dir);
                        let next = resolve_move(&state, site, is_a, dest, mode);
                        let next_idx = match index.get(&next) {
                            Some(&i) => i,
                            None => {
                                let i = states.len();
                                if i >= cap {
                                    return Err(OracleError::StateSpaceOverflow {
                                        cap,
                                        got: i + 1,
                                    });
                                }
                                index.insert(next.clone(), i);
                                states.push(next);
                                i
                            }
                        };
                        // rate 1/2 per direction per particle of the type
                        *row.entry(next_idx).or_insert(0.0) += 0.5 * f64::from(count);
                    }
                }
            }
            let mut entries: Vec<(usize, f64)> = row.into_iter().collect();
            entries.sort_unstable_by_key(|&(j, _)| j);
            let out_rate: f64 = entries.iter().map(|&(_, r)| r).sum();
            rows.push(entries);
            diag.push(-out_rate);
            cursor += 1;
        }
        Ok(Self {
            lattice,
            mode,
            states,
            index,
            rows,
            diag,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn mode(&self) -> InteractionMode {
        self.mode
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, i: usize) -> &[(u32, u32)] {
        &self.states[i]
    }

    pub fn state_index(&self, field: &OccupancyField) -> Option<usize> {
        self.index.get(&field_to_state(field)).copied()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Row sum including the diagonal (zero up to rounding).
    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, r)| r).sum::<f64>() + self.diag[i]
    }

    /// Point distribution concentrated on one initial configuration.
    pub fn point_distribution(&self, field: &OccupancyField) -> Result<Vec<f64>, OracleError> {
        let idx = self.state_index(field).ok_or(OracleError::BadInitial)?;
        let mut dist = vec![0.0; self.num_states()];
        dist[idx] = 1.0;
        Ok(dist)
    }

    /// Action of `exp(tG)` on an initial distribution by uniformization,
    /// truncating the Poisson series at total-variation error `<= 1e-12`.
    pub fn transient_distribution(
        &self,
        initial: &[f64],
        t: f64,
    ) -> Result<Vec<f64>, OracleError> {
        if initial.len() != self.num_states() {
            return Err(OracleError::DistributionMismatch {
                got: initial.len(),
                want: self.num_states(),
            });
        }
        let sum: f64 = initial.iter().sum();
        if initial.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(OracleError::BadDistribution(sum));
        }
        if !(t >= 0.0) || !t.is_finite() {
            return Err(OracleError::BadTime(t));
        }
        if t == 0.0 {
            return Ok(initial.to_vec());
        }
        let rate = self.diag.iter().fold(0.0f64, |m, &d| m.max(-d));
        if rate == 0.0 {
            return Ok(initial.to_vec());
        }
        let horizon = rate * t;
        if horizon > 500.0 {
            return Err(OracleError::HorizonTooLarge(horizon));
        }
        // v P with P = I + G / rate, applied to a row vector.
        let step = |v: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; v.len()];
            for (i, &vi) in v.iter().enumerate() {
                if vi == 0.0 {
                    continue;
                }
                out[i] += vi * (1.0 + self.diag[i] / rate);
                for &(j, r) in &self.rows[i] {
                    out[j] += vi * r / rate;
                }
            }
            out
        };
        let mut v = initial.to_vec();
        let mut result = vec![0.0; v.len()];
        let mut weight = (-horizon).exp();
        let mut cumulative = 0.0;
        let mut k = 0usize;
        loop {
            for (r, &vi) in result.iter_mut().zip(&v) {
                *r += weight * vi;
            }
            cumulative += weight;
            if 1.0 - cumulative <= 1e-12 || k > 100_000 {
                break;
            }
            v = step(&v);
            k += 1;
            weight *= horizon / k as f64;
        }
        Ok(result)
    }

    /// Expectation of an arbitrary configuration functional.
    pub fn expectation(&self, dist: &[f64], f: impl Fn(&[(u32, u32)]) -> f64) -> f64 {
        dist.iter()
            .zip(&self.states)
            .map(|(&p, s)| p * f(s))
            .sum()
    }

    /// Exact `E[count]` of one type at one site under a distribution.
    pub fn marginal(&self, dist: &[f64], site: usize, type_a: bool) -> f64 {
        self.expectation(dist, |s| {
            let (a, b) = s[site];
            f64::from(if type_a { a } else { b })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::walk_kernel_1d;

    fn pair_fields(lattice: &Lattice, a_site: usize, b_site: usize) -> OccupancyField {
        let mut f = OccupancyField::new(lattice.clone());
        f.set_site(a_site, 1, 0);
        f.set_site(b_site, 0, 1);
        f
    }

    #[test]
    fn two_site_pair_system_has_three_states() {
        let lat = Lattice::new(&[2]).unwrap();
        let initial = [pair_fields(&lat, 0, 1), pair_fields(&lat, 1, 0)];
        let gen =
            GeneratorMatrix::build(lat, InteractionMode::TwoTypeAnnihilate, &initial, 100)
                .unwrap();
        assert_eq!(gen.num_states(), 3);
        // The annihilated (empty) state is absorbing.
        let empty_idx = (0..3)
            .find(|&i| gen.state(i).iter().all(|&(a, b)| a == 0 && b == 0))
            .expect("empty state reachable");
        assert_eq!(gen.diag()[empty_idx], 0.0);
        for i in 0..3 {
            assert!(gen.row_sum(i).abs() < 1e-12);
        }
    }

    #[test]
    fn free_walker_on_ring_is_circulant() {
        let lat = Lattice::new(&[4]).unwrap();
        let mut f = OccupancyField::new(lat.clone());
        f.set_site(0, 0, 1);
        let gen = GeneratorMatrix::build(lat, InteractionMode::Free, &[f], 100).unwrap();
        assert_eq!(gen.num_states(), 4);
        for i in 0..4 {
            assert!((gen.diag()[i] + 1.0).abs() < 1e-12, "exit rate 1");
            assert!(gen.row_sum(i).abs() < 1e-12);
        }
    }

    #[test]
    fn state_cap_is_enforced() {
        let lat = Lattice::new(&[6]).unwrap();
        let mut f = OccupancyField::new(lat.clone());
        f.set_site(0, 0, 3);
        let err = GeneratorMatrix::build(lat, InteractionMode::Free, &[f], 5).unwrap_err();
        assert!(matches!(err, OracleError::StateSpaceOverflow { .. }));
    }

    #[test]
    fn transient_at_zero_time_is_identity() {
        let lat = Lattice::new(&[2]).unwrap();
        let initial = [pair_fields(&lat, 0, 1), pair_fields(&lat, 1, 0)];
        let gen =
            GeneratorMatrix::build(lat, InteractionMode::TwoTypeAnnihilate, &initial, 100)
                .unwrap();
        let p0 = vec![0.5, 0.5, 0.0];
        let p = gen.transient_distribution(&p0, 0.0).unwrap();
        assert_eq!(p, p0);
    }

    #[test]
    fn two_site_pair_annihilates_at_rate_two() {
        // Both particles jump at rate 1 onto the partner's site, so the
        // survival probability is e^{-2t}.
        let lat = Lattice::new(&[2]).unwrap();
        let initial = [pair_fields(&lat, 0, 1), pair_fields(&lat, 1, 0)];
        let gen = GeneratorMatrix::build(
            lat.clone(),
            InteractionMode::TwoTypeAnnihilate,
            &initial,
            100,
        )
        .unwrap();
        let p0 = gen.point_distribution(&pair_fields(&lat, 0, 1)).unwrap();
        let t = 0.5;
        let p = gen.transient_distribution(&p0, t).unwrap();
        let annihilated: f64 = gen.expectation(&p, |s| {
            if s.iter().all(|&(a, b)| a == 0 && b == 0) {
                1.0
            } else {
                0.0
            }
        });
        assert!((annihilated - (1.0 - (-2.0 * t).exp())).abs() < 1e-10);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn three_site_pair_has_unit_annihilation_hazard() {
        // On the 3-ring every distinct pair is mutually adjacent via one of
        // the two directions, giving a constant annihilation hazard 1, so
        // survival is e^{-t}.
        let lat = Lattice::new(&[3]).unwrap();
        let initial = [pair_fields(&lat, 0, 1)];
        let gen = GeneratorMatrix::build(
            lat.clone(),
            InteractionMode::TwoTypeAnnihilate,
            &initial,
            100,
        )
        .unwrap();
        let p0 = gen.point_distribution(&pair_fields(&lat, 0, 1)).unwrap();
        let p = gen.transient_distribution(&p0, 1.0).unwrap();
        let survival: f64 = gen.expectation(&p, |s| {
            if s.iter().any(|&(a, _)| a > 0) {
                1.0
            } else {
                0.0
            }
        });
        assert!(
            (survival - (-1.0f64).exp()).abs() < 1e-10,
            "survival {survival}"
        );
    }

    #[test]
    fn pair_marginal_splits_survival_evenly() {
        // Starting uniform over the two split configurations, the surviving
        // B particle is equally likely on either site.
        let lat = Lattice::new(&[2]).unwrap();
        let initial = [pair_fields(&lat, 0, 1), pair_fields(&lat, 1, 0)];
        let gen = GeneratorMatrix::build(
            lat.clone(),
            InteractionMode::TwoTypeAnnihilate,
            &initial,
            100,
        )
        .unwrap();
        let p0 = vec![0.5, 0.5, 0.0];
        let p = gen.transient_distribution(&p0, 0.5).unwrap();
        let expect = 0.5 * (-1.0f64).exp();
        assert!((gen.marginal(&p, 0, false) - expect).abs() < 1e-10);
        assert!((gen.marginal(&p, 1, false) - expect).abs() < 1e-10);
    }

    #[test]
    fn free_walker_marginal_matches_wrapped_kernel() {
        // Uniformization against the Bessel evaluation wrapped onto the
        // 4-site ring.
        let lat = Lattice::new(&[4]).unwrap();
        let mut f = OccupancyField::new(lat.clone());
        f.set_site(0, 0, 1);
        let gen = GeneratorMatrix::build(lat.clone(), InteractionMode::Free, &[f.clone()], 100)
            .unwrap();
        let p0 = gen.point_distribution(&f).unwrap();
        for t in [0.3, 1.0, 2.5] {
            let p = gen.transient_distribution(&p0, t).unwrap();
            for site in 0..4usize {
                let mut wrapped = 0.0;
                for image in -12i64..=12 {
                    wrapped += walk_kernel_1d(site as i64 + 4 * image, t).unwrap();
                }
                let marginal = gen.marginal(&p, site, false);
                assert!(
                    (marginal - wrapped).abs() < 1e-9,
                    "t={t} site={site}: {marginal} vs {wrapped}"
                );
            }
        }
    }

    #[test]
    fn free_walker_marginal_matches_kernel_in_2d() {
        let lat = Lattice::new(&[3, 3]).unwrap();
        let mut f = OccupancyField::new(lat.clone());
        let origin = lat.encode(&[0, 0]);
        f.set_site(origin, 0, 1);
        let gen = GeneratorMatrix::build(lat.clone(), InteractionMode::Free, &[f.clone()], 100)
            .unwrap();
        let p0 = gen.point_distribution(&f).unwrap();
        let t = 1.2;
        let p = gen.transient_distribution(&p0, t).unwrap();
        for x in 0..3i64 {
            for y in 0..3i64 {
                let mut wrapped = 0.0;
                for ix in -8i64..=8 {
                    for iy in -8i64..=8 {
                        wrapped += walk_kernel_1d(x + 3 * ix, t).unwrap()
                            * walk_kernel_1d(y + 3 * iy, t).unwrap();
                    }
                }
                let marginal = gen.marginal(&p, lat.encode(&[x, y]), false);
                assert!(
                    (marginal - wrapped).abs() < 1e-9,
                    "site ({x},{y}): {marginal} vs {wrapped}"
                );
            }
        }
    }

    #[test]
    fn truncation_depth_is_converged() {
        // Pushing the series further changes nothing at the 1e-10 level:
        // compare t against two half-steps (semigroup property), which
        // exercises independent truncations.
        let lat = Lattice::new(&[3]).unwrap();
        let initial = [pair_fields(&lat, 0, 1)];
        let gen = GeneratorMatrix::build(
            lat.clone(),
            InteractionMode::TwoTypeAnnihilate,
            &initial,
            100,
        )
        .unwrap();
        let p0 = gen.point_distribution(&pair_fields(&lat, 0, 1)).unwrap();
        let direct = gen.transient_distribution(&p0, 2.0).unwrap();
        let half = gen.transient_distribution(&p0, 1.0).unwrap();
        let composed = gen.transient_distribution(&half, 1.0).unwrap();
        for (x, y) in direct.iter().zip(&composed) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn annihilated_only_distribution_has_zero_marginals() {
        let lat = Lattice::new(&[2]).unwrap();
        let initial = [pair_fields(&lat, 0, 1)];
        let gen =
            GeneratorMatrix::build(lat, InteractionMode::TwoTypeAnnihilate, &initial, 100)
                .unwrap();
        let empty_idx = (0..gen.num_states())
            .find(|&i| gen.state(i).iter().all(|&(a, b)| a == 0 && b == 0))
            .unwrap();
        let mut dist = vec![0.0; gen.num_states()];
        dist[empty_idx] = 1.0;
        for site in 0..2 {
            assert_eq!(gen.marginal(&dist, site, true), 0.0);
            assert_eq!(gen.marginal(&dist, site, false), 0.0);
        }
    }
}
