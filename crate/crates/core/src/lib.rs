//! Block, complete-randomization and pair-matching designs for two-arm
//! trials with a binary outcome.
//!
//! The crate computes exact estimator MSE from closed forms, builds optimal
//! covariate matchings, runs reproducible Monte Carlo comparisons, and ships
//! brute-force oracles for every closed-form result it relies on.

pub mod designs;
pub mod domain;
pub mod error;
pub mod estimators;
pub mod matching;
pub mod mse;
pub mod rng;
pub mod simulation;
pub mod verify;

pub use domain::{
    validate_design_assumptions, Allocation, BlockPartition, CovarianceMatrix, DesignKind, MatchSet, ResponseModel,
    Subjects, ValidationReport,
};
pub use error::{Error, Result};
