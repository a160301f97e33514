//! Semiparametric survival estimation: Cox regression, Wald inference and
//! Kaplan–Meier curves.

mod baseline;
mod cox;
mod dataset;
mod km;
mod normal;
mod wald;

pub use baseline::{breslow_baseline, BaselineHazard};
pub use cox::{
    cox_fit, log_partial_likelihood, score_and_information, CoxFit, FitOptions, TiesMethod,
    DIVERGENCE_BOUND, SCORE_TOLERANCE,
};
pub use dataset::{SurvivalDataset, SurvivalRow, Z_DELTA};
pub use km::{km_estimate, km_estimate_at_level, KMCurve};
pub use normal::{normal_cdf, normal_pdf, normal_quantile, normal_sf, two_sided_p};
pub use wald::{wald_test, TestResult};
