//! Kinetic Monte Carlo laboratory for diffusion-limited pair reactions on
//! periodic lattices.
//!
//! The crate simulates particles performing independent continuous-time
//! simple random walks on a torus in one, two, or three dimensions, with
//! four interaction rules: two-type annihilation (`A + B -> inert`),
//! single-type annihilation (`A + A -> inert`), single-type coalescence
//! (`A + A -> A`), and free motion. Around the event engine it provides
//! the reference objects needed to verify the simulation quantitatively:
//!
//! - exact random-walk transition kernels (scaled Bessel evaluation) and
//!   their Gaussian limits, with truncated lattice tabulation and
//!   convolution ([`kernels`]);
//! - an exact transient solver for tiny systems via uniformization of the
//!   jump-chain generator ([`oracle`]);
//! - samplers for the Brownian sheet, white noise over rectangles, and
//!   heat-smoothed white-noise fields ([`gaussian`]);
//! - estimators and goodness-of-fit machinery that reduce simulation
//!   snapshots to densities, scaled block statistics, segregation
//!   measures, and mixture diagnostics ([`observables`], [`stats`]).

pub mod dynamics;
pub mod fenwick;
pub mod field;
pub mod gaussian;
pub mod kernels;
pub mod lattice;
pub mod observables;
pub mod oracle;
pub mod stats;

pub use dynamics::{InteractionMode, SimulationState};
pub use field::{BlockCounts, OccupancyField, RealField};
pub use kernels::KernelTable;
pub use lattice::{Lattice, Rectangle};
