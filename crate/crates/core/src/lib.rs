//! Time-dependent variational Monte Carlo for quantum annealing of
//! transverse-field Ising spin glasses, with Jastrow-Feenberg states and a
//! dense state-vector oracle for validation.

pub mod ansatz;
pub mod error;
pub mod exact;
pub mod lattice;
pub mod model;
pub mod observables;
pub mod runner;
pub mod sampler;
pub mod seeds;
pub mod tdvp;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
