use serde::{Deserialize, Serialize};

use super::load::{RawCohort, RowError};
use super::schema::AnalysisWindow;
use crate::error::PipelineError;
use crate::survival::{SurvivalDataset, SurvivalRow, Z_DELTA};

/// Row accounting: `included + excluded_by_window + excluded_pre_landmark_event + rejected == input_rows`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub input_rows: usize,
    /// Rows that failed to parse or had an event before vaccination.
    pub rejected: usize,
    /// Vaccinated before the window opened or on/after the landmark.
    pub excluded_by_window: usize,
    /// Event on or before the landmark (left truncation).
    pub excluded_pre_landmark_event: usize,
    pub included: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisData {
    /// Covariates in schema order with `z_delta` last; times in whole days from L.
    pub dataset: SurvivalDataset,
    pub exclusions: ExclusionReport,
    pub errors: Vec<RowError>,
}

/// Builds the landmark dataset: z_delta = L − vaccination, T = min(event, censor) − L,
/// C = 1 iff L < event ≤ censor.
pub fn build_analysis_dataset(raw: &RawCohort, window: &AnalysisWindow) -> Result<AnalysisData, PipelineError> {
    window.validate()?;
    let mut report = ExclusionReport {
        input_rows: raw.n_input_rows,
        rejected: raw.errors.len(),
        ..Default::default()
    };
    let mut errors = raw.errors.clone();
    let mut rows = Vec::with_capacity(raw.records.len());
    for rec in &raw.records {
        let v = rec.vaccination_date;
        if let Some(e) = rec.event_date {
            if e < v {
                report.rejected += 1;
                errors.push(RowError {
                    line: rec.line,
                    id: rec.id.clone(),
                    message: format!("event date {e} precedes vaccination date {v}"),
                });
                continue;
            }
        }
        if v < window.vaccination_start || v >= window.landmark {
            report.excluded_by_window += 1;
            continue;
        }
        if rec.event_date.is_some_and(|e| e <= window.landmark) {
            report.excluded_pre_landmark_event += 1;
            continue;
        }
        let z = (window.landmark - v).num_days() as f64;
        let (end, event) = match rec.event_date {
            Some(e) if e <= window.censor => (e, true),
            _ => (window.censor, false),
        };
        let t = (end - window.landmark).num_days() as f64;
        let mut covariates = rec.covariates.clone();
        covariates.push(z);
        rows.push(SurvivalRow::new(t, event, covariates));
    }
    report.included = rows.len();
    errors.sort_by_key(|e| e.line);

    let mut names = raw.covariate_names.clone();
    names.push(Z_DELTA.to_string());
    let dataset = SurvivalDataset::new(names, rows)?;
    Ok(AnalysisData {
        dataset,
        exclusions: report,
        errors,
    })
}
