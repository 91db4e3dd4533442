//! Bayesian Gaussian-process model of Test cricket batting ability.
//!
//! A player's career is a sequence of innings scores, some of them not-out
//! (right-censored). Within an innings the dismissal hazard falls as the
//! batter "gets their eye in"; between innings the eye-in ability drifts
//! according to a Gaussian-process prior on its logarithm. Venue and
//! team-innings multipliers scale the whole effective-average curve.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: career records and the CSV career file format.
//! - [`hazard`]: effective average, hazard, score distribution, likelihood
//!   and the expected score `nu`.
//! - [`gp`]: powered-exponential covariance, jittered Cholesky, whitened
//!   latent transform and conditional forecasting.
//! - [`nested`]: a generic nested-sampling engine with constrained
//!   Metropolis exploration.
//! - [`inference`]: priors, per-player fits, trajectory summaries, rankings.
//! - [`evaluation`]: moving-average baselines, leave-one-out error,
//!   hierarchical post-processing of the match effects, and a forward
//!   simulator.
//! - [`persist`] and [`config`]: on-disk formats used by the CLI.
//!
//! The numerical kernels in [`hazard`] and [`gp`] are generic over the
//! floating-point type through [`Real`]; the aliases below fix them to
//! `f64` (what the sampler uses) or `f32`.

pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod gp;
pub mod hazard;
pub mod inference;
pub mod linalg;
pub mod nested;
pub mod persist;
pub mod scalar;
pub mod stats;

pub use data::{CareerRecord, InningsRecord, TeamInnings, Venue};
pub use error::{Error, Result};
pub use nested::{NestedProblem, NsConfig, NsResult};
pub use scalar::Real;

/// Per-innings ability parameters in double precision.
pub type InningsAbility64 = hazard::InningsAbility<f64>;
/// Per-innings ability parameters in single precision.
pub type InningsAbility32 = hazard::InningsAbility<f32>;
/// Covariance hyperparameters in double precision.
pub type GpHyper64 = gp::GpHyper<f64>;
/// Covariance hyperparameters in single precision.
pub type GpHyper32 = gp::GpHyper<f32>;
/// Dense matrix in double precision.
pub type Matrix64 = linalg::Matrix<f64>;
/// Cached Cholesky factoriser in double precision.
pub type FactorCache64 = gp::FactorCache<f64>;
