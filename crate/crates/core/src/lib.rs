//! Manipulation tests for regression discontinuity designs with several
//! running variables.
//!
//! The null hypothesis is continuity, at the cutoff, of each running
//! variable's conditional marginal density given that the remaining
//! variables are on the treated side. Each marginal discontinuity is
//! estimated with boundary-adaptive local polynomial density estimators and
//! the per-variable statistics are combined by one of several procedures
//! (quadratic form, maximum, Bonferroni, or distance-based tests).

pub mod error;
pub mod lpdensity;
pub mod manipulation;
pub mod marginals;
pub mod montecarlo;
mod numeric;
pub mod statdist;

pub use error::{Error, Result};
pub use lpdensity::{BandwidthSpec, Kernel};
pub use manipulation::{
    bct_test, distance_test, mt_test, mtmax_test, signed_distance, Method, TestResult,
};
pub use marginals::{
    all_marginal_stats, center, conditional_subsample, marginal_stat, CutoffSpec, Dataset,
    Direction, MarginalStat,
};
pub use montecarlo::{
    generate, local_asymptotic_power, run_rejection_study, ModelSpec, PowerPoint, SimConfig,
    StudyResult,
};
pub use statdist::ProbabilityValue;
