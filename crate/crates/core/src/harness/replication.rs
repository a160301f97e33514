use serde::{Deserialize, Serialize};

use super::grid::{EstimatorKind, ExperimentConfig};
use crate::error::HarnessError;
use crate::hazard::{generate_cohort, AnalyticCohort};
use crate::survival::{cox_fit, wald_test, FitOptions, SurvivalDataset, SurvivalRow, Z_DELTA};

/// Confidence level for the coverage indicator.
pub const COVERAGE_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetEstimate {
    pub beta_delta_hat: f64,
    pub se_delta: f64,
    pub p_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOutcome {
    pub estimator: EstimatorKind,
    pub converged: bool,
    pub beta1_hat: Option<f64>,
    pub se1: Option<f64>,
    /// Whether the 95% Wald interval contains the true β₁.
    pub covered: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub cell_id: u64,
    pub rep: usize,
    pub seed: u64,
    pub n_events: usize,
    pub offset: Option<OffsetEstimate>,
    pub estimates: Vec<EstimatorOutcome>,
}

impl ReplicationResult {
    pub fn outcome(&self, kind: EstimatorKind) -> Option<&EstimatorOutcome> {
        self.estimates.iter().find(|e| e.estimator == kind)
    }
}

/// Builds the analysis dataset an estimator sees for a simulated cohort.
///
/// Only the proposed model is defined without the subgroup indicator; the
/// other estimators exist to estimate β₁ and return `None` without one.
pub fn estimator_dataset(cohort: &AnalyticCohort, kind: EstimatorKind) -> Option<SurvivalDataset> {
    let with_x1 = cohort.subgroup_enabled;
    if !with_x1 && kind != EstimatorKind::ProposedOffset {
        return None;
    }
    let x1 = |x: Option<u8>| f64::from(x.unwrap_or(0));
    let rows = cohort
        .rows
        .iter()
        .map(|r| match kind {
            EstimatorKind::ProposedOffset => {
                let mut cov = vec![r.z_delta];
                if with_x1 {
                    cov.push(x1(r.x1));
                }
                SurvivalRow::new(r.time, r.event, cov)
            }
            EstimatorKind::NaiveCalendar => SurvivalRow::new(r.time, r.event, vec![x1(r.x1)]),
            EstimatorKind::VaccinationTime => SurvivalRow::new(r.z_delta + r.time, r.event, vec![x1(r.x1)]),
            EstimatorKind::VaccinationTimeDelayedEntry => {
                SurvivalRow::new(r.z_delta + r.time, r.event, vec![x1(r.x1)]).with_entry(r.z_delta)
            }
        })
        .collect();
    let names: Vec<&str> = match kind {
        EstimatorKind::ProposedOffset if with_x1 => vec![Z_DELTA, "x1"],
        EstimatorKind::ProposedOffset => vec![Z_DELTA],
        _ => vec!["x1"],
    };
    SurvivalDataset::new(names, rows).ok()
}

fn fit_estimator(
    cohort: &AnalyticCohort,
    kind: EstimatorKind,
    beta1: f64,
    options: &FitOptions,
) -> Option<(EstimatorOutcome, Option<OffsetEstimate>)> {
    let data = estimator_dataset(cohort, kind)?;
    let failed = |error: String| EstimatorOutcome {
        estimator: kind,
        converged: false,
        beta1_hat: None,
        se1: None,
        covered: None,
        error: Some(error),
    };
    let fit = match cox_fit(&data, options) {
        Ok(fit) if fit.converged => fit,
        Ok(_) => return Some((failed("not converged".into()), None)),
        Err(e) => return Some((failed(e.to_string()), None)),
    };

    let mut offset = None;
    if let Some(j) = fit.index_of(Z_DELTA) {
        match wald_test(&fit, j, COVERAGE_LEVEL) {
            Ok(t) => {
                offset = Some(OffsetEstimate {
                    beta_delta_hat: t.estimate,
                    se_delta: t.std_error,
                    p_delta: t.p_value,
                })
            }
            Err(e) => return Some((failed(e.to_string()), None)),
        }
    }
    let mut outcome = EstimatorOutcome {
        estimator: kind,
        converged: true,
        beta1_hat: None,
        se1: None,
        covered: None,
        error: None,
    };
    if let Some(j) = fit.index_of("x1") {
        match wald_test(&fit, j, COVERAGE_LEVEL) {
            Ok(t) => {
                outcome.beta1_hat = Some(t.estimate);
                outcome.se1 = Some(t.std_error);
                outcome.covered = Some(t.covers(beta1));
            }
            Err(e) => return Some((failed(e.to_string()), None)),
        }
    }
    Some((outcome, offset))
}

/// Simulates one cohort for grid cell `index` and fits every configured estimator.
///
/// Fit failures are recorded per estimator and never abort the replication.
pub fn run_replication(
    config: &ExperimentConfig,
    index: usize,
    rep: usize,
) -> Result<ReplicationResult, HarnessError> {
    let cohort_config = config.cohort_config(index, rep);
    let cohort = generate_cohort(&cohort_config)?;
    let mut result = ReplicationResult {
        cell_id: config.cell_id(index),
        rep,
        seed: cohort_config.seed,
        n_events: cohort.n_events(),
        offset: None,
        estimates: Vec::new(),
    };
    for &kind in &config.estimators {
        if let Some((outcome, offset)) = fit_estimator(&cohort, kind, cohort_config.beta1, &config.fit) {
            if kind == EstimatorKind::ProposedOffset {
                result.offset = offset;
            }
            result.estimates.push(outcome);
        }
    }
    Ok(result)
}
