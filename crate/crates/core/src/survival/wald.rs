use serde::{Deserialize, Serialize};

use super::cox::CoxFit;
use super::normal::{normal_quantile, two_sided_p};
use crate::error::SurvivalError;

/// Wald inference for one coefficient, on the log-hazard scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub estimate: f64,
    pub std_error: f64,
    pub z_value: f64,
    pub p_value: f64,
    pub hazard_ratio: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub confidence_level: f64,
}

impl TestResult {
    pub fn from_estimate(
        estimate: f64,
        std_error: f64,
        confidence_level: f64,
    ) -> Result<Self, SurvivalError> {
        if !(std_error > 0.0 && std_error.is_finite()) {
            return Err(SurvivalError::InvalidArgument(format!(
                "standard error must be positive and finite, got {std_error}"
            )));
        }
        if !(confidence_level > 0.0 && confidence_level < 1.0) {
            return Err(SurvivalError::InvalidArgument(format!(
                "confidence level must lie in (0,1), got {confidence_level}"
            )));
        }
        let q = normal_quantile(0.5 * (1.0 + confidence_level))?;
        let z_value = estimate / std_error;
        Ok(Self {
            estimate,
            std_error,
            z_value,
            p_value: two_sided_p(z_value),
            hazard_ratio: estimate.exp(),
            ci_lower: (estimate - q * std_error).exp(),
            ci_upper: (estimate + q * std_error).exp(),
            confidence_level,
        })
    }

    /// Whether the log-scale interval contains `value`.
    pub fn covers(&self, value: f64) -> bool {
        let v = value.exp();
        self.ci_lower <= v && v <= self.ci_upper
    }
}

/// Tests H₀: β_index = 0 for a converged fit.
pub fn wald_test(
    fit: &CoxFit,
    index: usize,
    confidence_level: f64,
) -> Result<TestResult, SurvivalError> {
    if !fit.converged {
        return Err(SurvivalError::NotConverged);
    }
    if index >= fit.beta.len() {
        return Err(SurvivalError::InvalidArgument(format!(
            "coefficient index {index} out of range for {} coefficients",
            fit.beta.len()
        )));
    }
    let var = fit.covariance[index][index];
    if !(var > 0.0) {
        return Err(SurvivalError::ZeroVariance(index));
    }
    TestResult::from_estimate(fit.beta[index], var.sqrt(), confidence_level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::cox::TiesMethod;

    fn fake_fit(beta: f64, var: f64, converged: bool) -> CoxFit {
        CoxFit {
            covariate_names: vec!["x".into()],
            beta: vec![beta],
            covariance: vec![vec![var]],
            log_likelihood: 0.0,
            null_log_likelihood: 0.0,
            loglik_trace: vec![0.0],
            iterations: 1,
            converged,
            max_abs_score: 0.0,
            ties_method: TiesMethod::Efron,
            n_events: 1,
            n_rows: 1,
        }
    }

    #[test]
    fn null_point() {
        let t = wald_test(&fake_fit(0.0, 1.0, true), 0, 0.95).unwrap();
        assert_eq!(t.z_value, 0.0);
        assert_eq!(t.p_value, 1.0);
        assert_eq!(t.hazard_ratio, 1.0);
        assert!((t.ci_lower - (-1.959964f64).exp()).abs() < 1e-6);
        assert!((t.ci_upper - 1.959964f64.exp()).abs() < 1e-6);
    }

    #[test]
    fn offset_row_of_real_world_table() {
        // Estimate and SE back-computed from a reported "1.003 (1.000, 1.005), p 0.040".
        let t = TestResult::from_estimate(0.002994, 0.001459, 0.95).unwrap();
        assert_eq!(format!("{:.3}", t.hazard_ratio), "1.003");
        assert_eq!(format!("{:.3}", t.p_value), "0.040");
        assert_eq!(format!("{:.3}", t.ci_lower), "1.000");
        assert!((t.ci_upper - 1.0059).abs() < 5e-4);
    }

    #[test]
    fn rejects_unusable_fits() {
        assert_eq!(
            wald_test(&fake_fit(0.1, 1.0, false), 0, 0.95),
            Err(SurvivalError::NotConverged)
        );
        assert_eq!(
            wald_test(&fake_fit(0.1, 0.0, true), 0, 0.95),
            Err(SurvivalError::ZeroVariance(0))
        );
        assert!(wald_test(&fake_fit(0.1, 1.0, true), 1, 0.95).is_err());
    }

    #[test]
    fn ci_brackets_hazard_ratio() {
        let t = TestResult::from_estimate(-0.4, 0.2, 0.9).unwrap();
        assert!(t.ci_lower < t.hazard_ratio && t.hazard_ratio < t.ci_upper);
        assert!(t.covers(-0.4));
        assert!(!t.covers(0.5));
    }
}
