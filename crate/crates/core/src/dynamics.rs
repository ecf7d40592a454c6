//! Exact event-driven simulation of the interacting walk systems.
//!
//! The engine is a Gillespie sampler for the continuous-time Markov chain
//! on occupancy configurations: every particle jumps to each of its `2d`
//! nearest neighbors at rate `1/2`, so events arrive at aggregate rate
//! `d * W` with `W` the live particle count. Each event picks a site with
//! probability proportional to its occupancy through a Fenwick tree, picks
//! the moving type proportional to the site's `(a, b)` split, moves one
//! step, and resolves the landing according to the interaction mode.
//!
//! Particle identities are never tracked: the occupancy counts alone form
//! the same Markov chain, which keeps annihilation and coalescence `O(1)`
//! per event on top of the `O(log M)` weight updates.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use thiserror::Error;

use crate::fenwick::FenwickTree;
use crate::field::OccupancyField;
use crate::lattice::Lattice;

/// Fenwick-vs-field totals are cross-checked after this many events.
const AUDIT_INTERVAL: u64 = 1 << 20;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("initial intensity must be positive, got {0}")]
    BadIntensity(f64),
    #[error("target time {target} is before the current clock {clock}")]
    TimeReversal { target: f64, clock: f64 },
    #[error("snapshot times must be strictly increasing and non-negative")]
    UnsortedSnapshots,
    #[error("mode {mode:?} requires per-site exclusivity (min(a,b)=0)")]
    NotExclusive { mode: InteractionMode },
    #[error("mode {mode:?} uses only the B channel, but A particles are present")]
    WrongChannel { mode: InteractionMode },
    #[error("sampler audit failed: field holds {field} particles, sampler {sampler}")]
    AuditMismatch { field: u64, sampler: i64 },
}

/// Interaction rule applied when a particle lands on an occupied site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteractionMode {
    /// `A + B -> inert`: landing on the opposite type removes one pair.
    TwoTypeAnnihilate,
    /// `A + A -> inert`: landing on an occupied site removes mover and one
    /// resident (single type, carried in the B channel).
    SingleTypeAnnihilate,
    /// `A + A -> A`: the mover merges into an occupied destination.
    SingleTypeCoalesce,
    /// Independent walks; no interaction.
    Free,
}

impl InteractionMode {
    pub fn is_single_type(self) -> bool {
        matches!(
            self,
            InteractionMode::SingleTypeAnnihilate | InteractionMode::SingleTypeCoalesce
        )
    }
}

/// Deterministic replica substream: a fixed master seed with the replica
/// index as the ChaCha stream number.
pub fn replica_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// The Markov chain state: occupancy field, clock, interaction mode, the
/// weighted site sampler, and the replica RNG stream.
#[derive(Debug, Clone)]
pub struct SimulationState {
    field: OccupancyField,
    clock: f64,
    mode: InteractionMode,
    sampler: FenwickTree,
    rng: ChaCha8Rng,
    events: u64,
    lambda: Option<f64>,
}

impl SimulationState {
    /// Wraps an explicit occupancy field, validating the mode invariants.
    pub fn from_field(
        field: OccupancyField,
        mode: InteractionMode,
        rng: ChaCha8Rng,
    ) -> Result<Self, DynamicsError> {
        if mode == InteractionMode::TwoTypeAnnihilate && !field.is_exclusive() {
            return Err(DynamicsError::NotExclusive { mode });
        }
        if mode.is_single_type() && field.totals().0 != 0 {
            return Err(DynamicsError::WrongChannel { mode });
        }
        let mut weights = vec![0i64; field.lattice().num_sites()];
        for (site, (a, b)) in field.occupied() {
            weights[site] = i64::from(a) + i64::from(b);
        }
        let sampler = FenwickTree::from_weights(&weights);
        Ok(Self {
            field,
            clock: 0.0,
            mode,
            sampler,
            rng,
            events: 0,
            lambda: None,
        })
    }

    /// Independent Poisson(`lambda`) counts of each type per site, followed
    /// by instantaneous per-site cancellation, which leaves `min(a, b) = 0`
    /// everywhere and preserves the signed count `b - a`.
    pub fn init_poisson_two_type(
        lattice: Lattice,
        lambda: f64,
        mode: InteractionMode,
        mut rng: ChaCha8Rng,
    ) -> Result<Self, DynamicsError> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(DynamicsError::BadIntensity(lambda));
        }
        let poisson = Poisson::new(lambda).expect("positive intensity");
        let mut field = OccupancyField::new(lattice);
        for site in 0..field.lattice().num_sites() {
            let a = poisson.sample(&mut rng) as u32;
            let b = poisson.sample(&mut rng) as u32;
            let m = a.min(b);
            if a != m || b != m {
                field.set_site(site, a - m, b - m);
            }
        }
        let mut state = Self::from_field(field, mode, rng)?;
        state.lambda = Some(lambda);
        Ok(state)
    }

    /// One B particle at every site (the natural start for the single-type
    /// systems).
    pub fn init_full_single_type(
        lattice: Lattice,
        mode: InteractionMode,
        rng: ChaCha8Rng,
    ) -> Result<Self, DynamicsError> {
        let mut field = OccupancyField::new(lattice);
        for site in 0..field.lattice().num_sites() {
            field.set_site(site, 0, 1);
        }
        Self::from_field(field, mode, rng)
    }

    pub fn field(&self) -> &OccupancyField {
        &self.field
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn mode(&self) -> InteractionMode {
        self.mode
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    pub fn particle_count(&self) -> u64 {
        self.field.total_particles()
    }

    /// Recomputes the field total and compares it with the sampler total;
    /// exact equality is required.
    pub fn audit(&self) -> Result<(), DynamicsError> {
        let (a, b) = self.field.recompute_totals();
        let field_total = a + b;
        let sampler_total = self.sampler.total();
        if sampler_total != field_total as i64 {
            return Err(DynamicsError::AuditMismatch {
                field: field_total,
                sampler: sampler_total,
            });
        }
        Ok(())
    }

    /// Runs the exact chain up to `t_target`: exponential holding times at
    /// aggregate rate `d * W`, one single-particle jump per event. The empty
    /// state is absorbing.
    pub fn advance(&mut self, t_target: f64) -> Result<(), DynamicsError> {
        if t_target < self.clock {
            return Err(DynamicsError::TimeReversal {
                target: t_target,
                clock: self.clock,
            });
        }
        let lattice = self.field.lattice().clone();
        let d = lattice.dim();
        let dirs = 2 * d;
        loop {
            let weight = self.sampler.total();
            if weight == 0 {
                break;
            }
            let rate = d as f64 * weight as f64;
            let holding: f64 = Exp1.sample(&mut self.rng);
            let dt = holding / rate;
            if self.clock + dt > t_target {
                break;
            }
            self.clock += dt;
            let target = self.rng.gen_range(0..weight);
            let (site, offset) = self.sampler.sample(target);
            let (a, _b) = self.field.counts_at(site);
            let moves_a = offset < i64::from(a);
            if moves_a {
                self.field.add_a(site, -1);
            } else {
                self.field.add_b(site, -1);
            }
            self.sampler.add(site, -1);
            let dir = self.rng.gen_range(0..dirs);
            let dest = lattice.neighbor(site, dir);
            let (da, db) = self.field.counts_at(dest);
            match self.mode {
                InteractionMode::Free => {
                    if moves_a {
                        self.field.add_a(dest, 1);
                    } else {
                        self.field.add_b(dest, 1);
                    }
                    self.sampler.add(dest, 1);
                }
                InteractionMode::TwoTypeAnnihilate => {
                    if moves_a && db > 0 {
                        self.field.add_b(dest, -1);
                        self.sampler.add(dest, -1);
                    } else if !moves_a && da > 0 {
                        self.field.add_a(dest, -1);
                        self.sampler.add(dest, -1);
                    } else if moves_a {
                        self.field.add_a(dest, 1);
                        self.sampler.add(dest, 1);
                    } else {
                        self.field.add_b(dest, 1);
                        self.sampler.add(dest, 1);
                    }
                }
                InteractionMode::SingleTypeAnnihilate => {
                    if db > 0 {
                        self.field.add_b(dest, -1);
                        self.sampler.add(dest, -1);
                    } else {
                        self.field.add_b(dest, 1);
                        self.sampler.add(dest, 1);
                    }
                }
                InteractionMode::SingleTypeCoalesce => {
                    if db == 0 {
                        self.field.add_b(dest, 1);
                        self.sampler.add(dest, 1);
                    }
                    // Occupied destination absorbs the mover.
                }
            }
            self.events += 1;
            if self.events % AUDIT_INTERVAL == 0 {
                self.audit()?;
            }
        }
        self.clock = t_target;
        Ok(())
    }
}

/// Advances through `times` (strictly increasing, non-negative) and hands a
/// reference to the frozen state to `visit` at each one.
pub fn advance_through<F>(
    state: &mut SimulationState,
    times: &[f64],
    mut visit: F,
) -> Result<(), DynamicsError>
where
    F: FnMut(f64, &SimulationState),
{
    let mut prev = -1.0f64;
    for &t in times {
        if !(t >= 0.0) || t <= prev {
            return Err(DynamicsError::UnsortedSnapshots);
        }
        prev = t;
    }
    for &t in times {
        state.advance(t)?;
        visit(t, state);
    }
    Ok(())
}

/// Runs the chain and returns deep-copied occupancy snapshots at the
/// requested times.
pub fn run_with_snapshots(
    state: &mut SimulationState,
    times: &[f64],
) -> Result<Vec<(f64, OccupancyField)>, DynamicsError> {
    let mut out = Vec::with_capacity(times.len());
    advance_through(state, times, |t, s| out.push((t, s.field().clone())))?;
    Ok(out)
}
