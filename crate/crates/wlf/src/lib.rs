//! Learning Wasserstein Lagrangian Flows: a saddle-point solver for
//! dynamical optimal transport and its unbalanced, physically constrained,
//! and entropic (Schrödinger bridge) variants, with trajectory-inference
//! evaluation utilities.

pub mod checkpoint;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod field;
pub mod gradcheck;
pub mod hamiltonians;
pub mod pathmodel;
pub mod plot;
pub mod tape;
pub mod trainer;
pub mod transport_eval;

pub use error::{Result, WlfError};
