//! Non-negative least squares via a discontinuous dynamical system.
//!
//! The network integrates `x̃ = Aᵀy − AᵀA x` through integrators limited to
//! non-negative values; its equilibria are the solutions of
//! `min ½‖Ax − y‖²  s.t. x ≥ 0`. The crate provides the simulator
//! ([`dynsys`]), a box-constrained variant ([`boxdyn`]), classical reference
//! solvers ([`solvers`]), KKT certificates ([`kkt`]), random instance
//! generation ([`datagen`]), recovery metrics ([`metrics`]) and a Monte-Carlo
//! experiment driver ([`experiments`]).

pub mod boxdyn;
pub mod datagen;
pub mod dynsys;
pub mod error;
pub mod experiments;
pub mod kkt;
pub mod metrics;
pub mod numerics;
pub mod solvers;

pub use error::{Error, Result};
pub use numerics::{RealMatrix, RealVector};
