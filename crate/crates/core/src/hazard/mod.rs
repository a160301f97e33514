//! Hazard mechanisms, exact event-time sampling and cohort generation.

mod cohort;
mod spec;

pub use cohort::{generate_cohort, AnalyticCohort, CohortConfig, CohortRow};
pub use spec::{HazardSpec, Mechanism, DEFAULT_PRE_STRAIN_HAZARD};
