//! Recovery of the behavioral invariants of an unknown LTI system from a large,
//! fragmented, noisy multi-experiment dataset.
//!
//! The invariants are the left null space of the stacked input/output Hankel
//! matrix shared by every experiment. Noisy data only give access to a
//! moment-parameterized estimate of the aggregate correlation matrix; the
//! unknown noise moments are found by an SVD grid search.
//!
//! Pipeline:
//!
//! 1. [`sim`] generates persistently exciting experiments and injects noise.
//! 2. [`stats`] folds every experiment's stacked Hankel matrix into two
//!    mergeable aggregates in a single pass.
//! 3. [`estimator`] assembles the corrected matrix for any moment point and
//!    grid-searches the moments.
//! 4. [`validate`] compares the recovered subspace against a model oracle.
//!
//! All numerics are generic over [`Real`]; [`f64`] is the working precision
//! and the crate-root aliases fix it.

pub mod error;
pub mod estimator;
pub mod hankel;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod stats;
pub mod validate;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision state-space model.
pub type StateSpace = sim::StateSpace<f64>;
/// Double-precision experiment.
pub type Experiment = sim::Experiment<f64>;
/// Double-precision dataset.
pub type Dataset = sim::Dataset<f64>;
/// Double-precision stacked Hankel matrix.
pub type StackedHankel = hankel::StackedHankel<f64>;
/// Double-precision running aggregates.
pub type SufficientStats = stats::SufficientStats<f64>;
/// Double-precision averaged aggregates.
pub type AveragedStats = stats::AveragedStats<f64>;
/// Double-precision moment point.
pub type MomentPoint = estimator::MomentPoint<f64>;
/// Double-precision grid-search candidate.
pub type Candidate = estimator::Candidate<f64>;
/// Double-precision orthonormal subspace basis.
pub type SubspaceBasis = linalg::SubspaceBasis<f64>;
