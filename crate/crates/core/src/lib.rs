//! Joint user identification and channel estimation (JUICE) for grant-free
//! access with clustered user activity and unknown channel covariances.
//!
//! * [`model`] synthesizes the system: layout, correlated channels, activity,
//!   pilots, received signal.
//! * [`priors`] evaluates the sparsity and Wishart prior terms and the MM
//!   weights.
//! * [`solver`] is the two-level MAP-ADMM algorithm.
//! * [`baselines`] holds the oracle MMSE estimator and reweighted `ℓ2,1` ADMM.
//! * [`metrics`] computes NMSE and support recovery rate.
//! * [`harness`] runs seeded Monte-Carlo experiments and writes results.

pub mod baselines;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod priors;
pub mod rng;
pub mod solver;

pub use error::{JuiceError, Result};
