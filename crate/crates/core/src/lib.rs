//! Sequential test planning for accelerated life tests.
//!
//! The engine keeps a Gaussian belief over the coefficients of a censored
//! log-normal lifetime regression, updates it in closed form as failures and
//! right-censored runs arrive, and picks the next (material, stress) run by
//! the expected one-step gain in the best predicted mean log-lifetime at the
//! field stress.
//!
//! Modules, bottom up:
//!
//! * [`numerics`]: normal special functions and small SPD algebra.
//! * [`model`]: design points, observations, beliefs and the feature map.
//! * [`update`]: conjugate and moment-matched censored updates, plus the
//!   censored maximum-likelihood refit.
//! * [`acquisition`]: expected-improvement scoring over the candidate grid.
//! * [`policy`]: factorial, sequential D-optimal and sequential EI allocation.
//! * [`harness`]: synthetic studies and probability-of-correct-selection curves.

pub mod acquisition;
pub mod error;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod policy;
pub mod update;

pub use error::{Error, Result};
pub use model::{
    feature_map, mean_log_life, CandidateSet, DesignPoint, FeatureVector, Observation,
    PosteriorState,
};
