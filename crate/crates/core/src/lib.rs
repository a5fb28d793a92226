//! Gaussian approximation bounds for the maximum of a sum of independent
//! random vectors with only `2 + iota` finite moments.
//!
//! The crate is organised bottom-up:
//!
//! * [`smoothmax`] evaluates the log-sum-exp smooth maximum and its
//!   derivative tensors.
//! * [`smoother`] builds smoothed indicators of interval sets with
//!   certified derivative bounds.
//! * [`bounds`] computes the explicit coupling bound and the moment
//!   functionals it depends on.
//! * [`simulate`] draws heavy-tailed ensembles and their Gaussian
//!   analogues, and checks the distributional inequality and the
//!   Lindeberg decomposition empirically.
//! * [`tune`] picks the smoothing parameters.

pub mod bounds;
pub mod error;
mod serde_real;
pub mod simulate;
pub mod smoother;
pub mod smoothmax;
pub mod tune;

pub use bounds::{BoundReport, Estimate, MomentProfile, ProfileSource};
pub use error::{Error, Result};
pub use simulate::{Covariance, DistributionSpec, ExperimentResult, Family};
pub use smoother::{BorelSet, Interval, SmoothIndicator};
pub use smoothmax::{SmoothingParams, SoftmaxWeights};
