//! Simulation and verification toolkit for the one-dimensional Ising chain with a
//! Kac coupling plus a `λ/r²` tail.

pub mod coupling;
pub mod error;
pub mod lattice;
pub mod meanfield;
pub mod coarse;
pub mod snapshot;
pub mod sampler;
pub mod geometry;
pub mod freeenergy;
pub mod harness;
pub mod verify;

pub use coupling::{tail_sum, CouplingSpec};
pub use error::{KacError, Result};
pub use lattice::{apply_flip, delta_energy, hamiltonian, BoundaryCondition, BoundaryWindow, FieldCache, SpinConfig, UpdateStrategy};
pub use meanfield::{beta_bar, beta_tilde, dobrushin_lower, solve_m_beta, MeanFieldPoint};
