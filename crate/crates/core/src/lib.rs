//! Verification laboratory for uniform low-energy resolvent estimates of
//! spectral families on asymptotically conic (scattering) spaces.
//!
//! The library builds, per angular mode, the model spectral family
//! `P(sigma)`, its outgoing-conjugated form `Phat(sigma)`, the effective
//! normal operator and its rescaling, realizes weighted b-Sobolev norms on a
//! log-radial grid, and extracts best constants for the weighted resolvent
//! inequalities over sweeps in the spectral parameter. Companion modules
//! provide a symbolic Poisson-bracket engine for commutator identities on the
//! b-cotangent bundle, a Bessel/Hankel Green-function oracle on the exact
//! cone, and a Schur-complement analysis of an engineered zero-energy
//! nullspace.

pub mod banded;
pub mod cli;
pub mod discretization;
pub mod error;
pub mod estimates;
pub mod grid;
pub mod grushin;
pub mod indicial;
pub mod model;
pub mod solve;
pub mod special;
pub mod symbols;

pub use error::{Error, Result};
