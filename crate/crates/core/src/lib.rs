//! Link-level simulation of a high-mobility downlink aided by a refracting
//! surface mounted on the vehicle.
//!
//! The crate is organised bottom-up:
//!
//! - [`signal_math`]: steering vectors, DFT matrices, the centering projector.
//! - [`channel`]: Rician BS–surface channel with Doppler, static surface–user
//!   LoS channel, Jakes-correlated direct channel.
//! - [`estimation`]: concentrated ML estimation of the cascaded LoS phases
//!   (grid search + gradient ascent) and the per-block LS estimator.
//! - [`protocol`]: the two-stage frame (training designs, refraction settings,
//!   rate accounting).
//! - [`baselines`]: reference schemes (optimal refraction, full cascaded
//!   estimation, no surface, no phase alignment, delayed feedback, roadside
//!   deployments).
//! - [`harness`]: configuration, seeded Monte Carlo sweeps, metrics, reports.
//!
//! Monte Carlo loops run on rayon when the `parallel` feature is enabled (the
//! default); see [`exec`].

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod error;
pub mod estimation;
pub mod exec;
pub mod harness;
pub mod protocol;
pub mod rng;
pub mod signal_math;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Dense complex column vector.
pub type CVector = nalgebra::DVector<Complex64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
