//! Calibration of force-based crowd-evacuation simulations with discrete
//! decision making, by gradient descent over sampling-based gradient
//! estimators (IPA, DGO, PGO) and by particle swarm / genetic baselines.
//!
//! The numerical core is generic over the base scalar ([`Real`]: `f32` or
//! `f64`); the aliases below fix it to `f64`, which is what the harness uses.

pub mod ad;
pub mod error;
pub mod harness;
pub mod estimators;
pub mod optimizers;
pub mod scalar;
pub mod seed;
pub mod scenarios;
pub mod social_force;

pub use error::{Error, Result};
pub use scalar::{AdScalar, PlainScalar, Real};

/// Double-precision dual number.
pub type DualReal = ad::Dual<f64>;
/// Single-precision dual number.
pub type DualReal32 = ad::Dual<f32>;
