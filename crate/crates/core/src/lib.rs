//! Survival-analysis toolkit for telling waning vaccine immunity apart from a
//! newly emerged strain as the driver of breakthrough infections.
//!
//! The central test fits a Cox model on the landmark (calendar) time scale with
//! the vaccination offset `z_delta` (days from vaccination to the landmark) as
//! a covariate; a nonzero offset coefficient indicates waning.
//!
//! * [`survival`]: Cox regression, Wald tests, Kaplan–Meier curves.
//! * [`hazard`]: the two hazard mechanisms and left-truncated cohort simulation.
//! * [`harness`]: replicated simulation experiments and their metrics.
//! * [`pipeline`]: cohort CSV ingestion and the real-data analysis workflow.

pub mod error;
pub mod harness;
pub mod hazard;
pub mod pipeline;
pub mod rng;
pub mod survival;

pub use error::{HarnessError, HazardError, PipelineError, SurvivalError};
pub use hazard::{generate_cohort, AnalyticCohort, CohortConfig, HazardSpec, Mechanism};
pub use survival::{
    cox_fit, km_estimate, wald_test, CoxFit, FitOptions, KMCurve, SurvivalDataset, SurvivalRow,
    TestResult, TiesMethod,
};
