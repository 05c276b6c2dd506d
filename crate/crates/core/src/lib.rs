//! One-dimensional wavepacket simulator for cold atoms tunneling through
//! optical barriers, with position-measurement channels and the energy
//! bookkeeping that goes with them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cooling;
pub mod error;
pub mod grid;
pub mod harness;
pub mod measurement;
pub mod parallel;
pub mod potentials;
pub mod propagator;
pub mod snapshot;
pub mod units;
pub mod wavefn;

pub use error::{Error, Result};
pub use grid::{make_grid, Grid1D};
pub use potentials::{BarrierRegion, PotentialSpec};
pub use propagator::{PropagatorConfig, ScatteringRecord};
pub use units::UnitSystem;
pub use wavefn::{gaussian_packet, Observables, WaveFn};
