//! Quantized-field high-harmonic generation on a von Neumann lattice.
//!
//! A two-level system couples to a single, strongly populated field mode
//! without the rotating-wave approximation. The field-plus-interaction part
//! of the Hamiltonian is solved analytically (each σx branch drags its
//! coherent state around a displaced circle), and the atomic term is treated
//! by letting the expansion coefficients over a finite patch of the
//! von Neumann lattice evolve in time.
//!
//! Conventions: ħ = 1, the field frequency ω sets the time unit, and times
//! crossing module boundaries in records and files are in optical cycles
//! `T = 2π/ω`. Functions that take a bare `t` expect physical time.

pub mod dynamics;
pub mod error;
pub mod fock;
pub mod integrator;
pub mod lattice;
pub mod model;
pub mod observables;
pub mod phase_space;

pub use error::{Error, Result};
pub use model::{Branch, BranchLabel, ModelParams};

/// Complex double, used for every amplitude in the crate.
pub type C64 = num_complex::Complex64;
