//! Mechanism test and proposed-versus-naive hazard ratio tables.

use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, SurvivalError};
use crate::survival::{cox_fit, wald_test, FitOptions, SurvivalDataset, TestResult, Z_DELTA};

pub const OFFSET_LABEL: &str = "Vaccination offset z_Δ";

/// HR with interval to three decimals: `1.003 (1.000, 1.005)`.
pub fn format_hr(t: &TestResult) -> String {
    format!("{:.3} ({:.3}, {:.3})", t.hazard_ratio, t.ci_lower, t.ci_upper)
}

/// Three decimals, with `<0.001` below the display resolution.
pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".into()
    } else {
        format!("{p:.3}")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismOptions {
    /// Adjustment covariates; `None` uses every non-offset column.
    pub covariates: Option<Vec<String>>,
    /// Offset cap in days for the recent-vaccinee sensitivity analysis.
    pub sensitivity_cap: Option<f64>,
    pub alpha: f64,
    pub fit: FitOptions,
}

impl Default for MechanismOptions {
    fn default() -> Self {
        Self {
            covariates: None,
            sensitivity_cap: Some(90.0),
            alpha: 0.05,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateResult {
    pub term: String,
    pub result: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismReport {
    pub population: String,
    pub n_events: usize,
    pub n_patients: usize,
    /// Per-day hazard ratio of the vaccination offset.
    pub offset: TestResult,
    pub covariates: Vec<CovariateResult>,
    pub alpha: f64,
    pub waning_detected: bool,
    pub interpretation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<Box<SensitivityReport>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub cap_days: f64,
    pub n_patients: usize,
    pub n_events: usize,
    /// Absent when the subset could not be fitted; see `error`.
    pub report: Option<MechanismReport>,
    pub error: Option<String>,
}

fn adjustment_set(dataset: &SurvivalDataset, covariates: Option<&[String]>) -> Result<Vec<String>, PipelineError> {
    match covariates {
        Some(list) => {
            for name in list {
                if name == Z_DELTA || dataset.covariate_index(name).is_none() {
                    return Err(PipelineError::UnknownCovariate(name.clone()));
                }
            }
            Ok(list.to_vec())
        }
        None => Ok(dataset
            .covariate_names()
            .iter()
            .filter(|n| n.as_str() != Z_DELTA)
            .cloned()
            .collect()),
    }
}

fn fit_tests(data: &SurvivalDataset, options: &FitOptions) -> Result<Vec<TestResult>, PipelineError> {
    if data.n_events() == 0 {
        return Err(PipelineError::NoEventsAfterLandmark);
    }
    let fit = cox_fit(data, options)?;
    if !fit.converged {
        return Err(SurvivalError::NotConverged.into());
    }
    Ok((0..data.n_covariates())
        .map(|j| wald_test(&fit, j, options.confidence_level))
        .collect::<Result<_, _>>()?)
}

fn interpret(waning: bool, alpha: f64) -> String {
    if waning {
        format!(
            "p < {alpha}: waning immunity is contributing to the infections observed after the landmark date."
        )
    } else {
        format!(
            "p >= {alpha}: no evidence that waning immunity drives infections after the landmark date; \
             this does not confirm that breakthrough infections are due to a new strain."
        )
    }
}

fn single_report(
    population: &str,
    data: &SurvivalDataset,
    covariates: &[String],
    options: &MechanismOptions,
) -> Result<MechanismReport, PipelineError> {
    let mut names = covariates.to_vec();
    names.push(Z_DELTA.to_string());
    let model = data.select_covariates(&names)?;
    let tests = fit_tests(&model, &options.fit)?;
    let offset = *tests.last().expect("offset column present");
    let waning = offset.p_value < options.alpha;
    Ok(MechanismReport {
        population: population.into(),
        n_events: data.n_events(),
        n_patients: data.n_rows(),
        offset,
        covariates: covariates
            .iter()
            .zip(&tests)
            .map(|(term, &result)| CovariateResult {
                term: term.clone(),
                result,
            })
            .collect(),
        alpha: options.alpha,
        waning_detected: waning,
        interpretation: interpret(waning, options.alpha),
        sensitivity: None,
    })
}

pub fn sensitivity_label(cap: f64) -> String {
    format!("Sensitivity: Recently vaccinated patients (z_Δ ≤ {cap})")
}

/// Fits the fully adjusted offset model and tests H₀: β_Δ = 0, repeating on
/// the rows with z_delta ≤ cap when a cap is set.
pub fn mechanism_test(dataset: &SurvivalDataset, options: &MechanismOptions) -> Result<MechanismReport, PipelineError> {
    let z = dataset
        .covariate_index(Z_DELTA)
        .ok_or_else(|| PipelineError::UnknownCovariate(Z_DELTA.into()))?;
    options.fit.validate()?;
    let covariates = adjustment_set(dataset, options.covariates.as_deref())?;
    let mut report = single_report("All patients", dataset, &covariates, options)?;

    if let Some(cap) = options.sensitivity_cap {
        let subset = dataset.filter_rows(|r| r.covariates[z] <= cap);
        let n_patients = subset.as_ref().map_or(0, |s| s.n_rows());
        let n_events = subset.as_ref().map_or(0, |s| s.n_events());
        let fitted = subset
            .map_err(PipelineError::from)
            .and_then(|s| single_report(&sensitivity_label(cap), &s, &covariates, options));
        let (report_sub, error) = match fitted {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        report.sensitivity = Some(Box::new(SensitivityReport {
            cap_days: cap,
            n_patients,
            n_events,
            report: report_sub,
            error,
        }));
    }
    Ok(report)
}

impl MechanismReport {
    /// Population-level table: events / patients, offset HR (95% CI), p-value.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("Test for driving mechanism\n");
        out.push_str("Population | # events / # patients | Hazard Ratio (95% CI) | P-value\n");
        let line = |r: &MechanismReport| {
            format!(
                "{} | {} / {} | {} | {}\n",
                r.population,
                r.n_events,
                r.n_patients,
                format_hr(&r.offset),
                format_p(r.offset.p_value)
            )
        };
        out.push_str(&line(self));
        if let Some(s) = &self.sensitivity {
            match (&s.report, &s.error) {
                (Some(r), _) => out.push_str(&line(r)),
                (None, e) => out.push_str(&format!(
                    "{} | {} / {} | not estimable: {} | \n",
                    sensitivity_label(s.cap_days),
                    s.n_events,
                    s.n_patients,
                    e.as_deref().unwrap_or("unknown error")
                )),
            }
        }
        out.push_str("Hazard ratio is per day of vaccination offset.\n");
        out.push_str(&self.interpretation);
        out.push('\n');
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualModelRow {
    pub term: String,
    pub proposed: TestResult,
    /// Absent for the offset term, which the naive model omits.
    pub naive: Option<TestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualModelTable {
    pub n_events: usize,
    pub n_patients: usize,
    pub rows: Vec<DualModelRow>,
}

/// Fits the offset model and the naive calendar-time model (same covariates
/// without z_delta) on the same rows.
pub fn dual_model_comparison(
    dataset: &SurvivalDataset,
    covariates: Option<&[String]>,
    options: &FitOptions,
) -> Result<DualModelTable, PipelineError> {
    if dataset.covariate_index(Z_DELTA).is_none() {
        return Err(PipelineError::UnknownCovariate(Z_DELTA.into()));
    }
    let covariates = adjustment_set(dataset, covariates)?;
    let mut proposed_names = covariates.clone();
    proposed_names.push(Z_DELTA.to_string());
    let proposed_data = dataset.select_covariates(&proposed_names)?;
    let naive_data = dataset.select_covariates(&covariates)?;

    let (proposed, naive) = rayon::join(
        || fit_tests(&proposed_data, options),
        || {
            if covariates.is_empty() {
                Ok(Vec::new())
            } else {
                fit_tests(&naive_data, options)
            }
        },
    );
    let (proposed, naive) = (proposed?, naive?);

    let mut rows = vec![DualModelRow {
        term: OFFSET_LABEL.into(),
        proposed: *proposed.last().expect("offset column present"),
        naive: None,
    }];
    for (j, term) in covariates.iter().enumerate() {
        rows.push(DualModelRow {
            term: term.clone(),
            proposed: proposed[j],
            naive: Some(naive[j]),
        });
    }
    Ok(DualModelTable {
        n_events: dataset.n_events(),
        n_patients: dataset.n_rows(),
        rows,
    })
}

pub const DUAL_CSV_HEADER: [&str; 9] = [
    "term",
    "proposed_hr",
    "proposed_ci_lower",
    "proposed_ci_upper",
    "proposed_p",
    "naive_hr",
    "naive_ci_lower",
    "naive_ci_upper",
    "naive_p",
];

impl DualModelTable {
    pub fn to_text(&self) -> String {
        let mut out = String::from(
            "Term | Proposed HR (95% CI) | p-value | Cox PH regression HR (95% CI) | p-value\n",
        );
        for row in &self.rows {
            let (hr, p) = match &row.naive {
                Some(t) => (format_hr(t), format_p(t.p_value)),
                None => (String::new(), String::new()),
            };
            out.push_str(&format!(
                "{} | {} | {} | {} | {}\n",
                row.term,
                format_hr(&row.proposed),
                format_p(row.proposed.p_value),
                hr,
                p
            ));
        }
        out
    }

    /// Full-precision CSV; naive columns are empty for the offset row.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(DUAL_CSV_HEADER)?;
        for row in &self.rows {
            let mut rec = vec![
                row.term.clone(),
                row.proposed.hazard_ratio.to_string(),
                row.proposed.ci_lower.to_string(),
                row.proposed.ci_upper.to_string(),
                row.proposed.p_value.to_string(),
            ];
            match &row.naive {
                Some(t) => rec.extend([
                    t.hazard_ratio.to_string(),
                    t.ci_lower.to_string(),
                    t.ci_upper.to_string(),
                    t.p_value.to_string(),
                ]),
                None => rec.extend(std::iter::repeat_n(String::new(), 4)),
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::SurvivalRow;

    fn result(hr: f64, lo: f64, hi: f64, p: f64) -> TestResult {
        TestResult {
            estimate: hr.ln(),
            std_error: 1.0,
            z_value: 0.0,
            p_value: p,
            hazard_ratio: hr,
            ci_lower: lo,
            ci_upper: hi,
            confidence_level: 0.95,
        }
    }

    #[test]
    fn number_formats() {
        assert_eq!(format_hr(&result(1.0026, 1.0001, 1.00541, 0.04)), "1.003 (1.000, 1.005)");
        assert_eq!(format_p(0.0004), "<0.001");
        assert_eq!(format_p(0.04), "0.040");
        assert_eq!(format_p(0.5071), "0.507");
    }

    #[test]
    fn table_text_layouts() {
        let sub = MechanismReport {
            population: sensitivity_label(90.0),
            n_events: 149,
            n_patients: 28646,
            offset: result(0.998, 0.990, 1.005, 0.507),
            covariates: vec![],
            alpha: 0.05,
            waning_detected: false,
            interpretation: interpret(false, 0.05),
            sensitivity: None,
        };
        let full = MechanismReport {
            population: "All patients".into(),
            n_events: 509,
            n_patients: 96158,
            offset: result(1.003, 1.0, 1.005, 0.040),
            covariates: vec![],
            alpha: 0.05,
            waning_detected: true,
            interpretation: interpret(true, 0.05),
            sensitivity: Some(Box::new(SensitivityReport {
                cap_days: 90.0,
                n_patients: 28646,
                n_events: 149,
                report: Some(sub),
                error: None,
            })),
        };
        let text = full.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[2], "All patients | 509 / 96158 | 1.003 (1.000, 1.005) | 0.040");
        assert_eq!(
            lines[3],
            "Sensitivity: Recently vaccinated patients (z_Δ ≤ 90) | 149 / 28646 | 0.998 (0.990, 1.005) | 0.507"
        );

        let dual = DualModelTable {
            n_events: 1,
            n_patients: 1,
            rows: vec![
                DualModelRow {
                    term: OFFSET_LABEL.into(),
                    proposed: result(1.003, 1.0, 1.005, 0.04),
                    naive: None,
                },
                DualModelRow {
                    term: "COPD".into(),
                    proposed: result(1.869, 1.306, 2.674, 0.0001),
                    naive: Some(result(1.846, 1.291, 2.642, 0.0002)),
                },
            ],
        };
        let text = dual.to_text();
        assert_eq!(
            text.lines().nth(2).unwrap(),
            "COPD | 1.869 (1.306, 2.674) | <0.001 | 1.846 (1.291, 2.642) | <0.001"
        );
        assert_eq!(text.lines().nth(1).unwrap(), "Vaccination offset z_Δ | 1.003 (1.000, 1.005) | 0.040 |  | ");
        let csv = dual.to_csv().unwrap();
        assert!(csv.starts_with(&DUAL_CSV_HEADER.join(",")));
        assert!(csv.lines().nth(1).unwrap().ends_with(",,,,"));
    }

    fn toy() -> SurvivalDataset {
        // Deterministic spread of times, offsets and a binary covariate.
        let rows = (0..60)
            .map(|i| {
                let x = (i % 2) as f64;
                let z = (1 + (i * 7) % 120) as f64;
                let t = (1 + (i * 13) % 90) as f64;
                SurvivalRow::new(t, i % 3 != 0, vec![x, z])
            })
            .collect();
        SurvivalDataset::new(["x", Z_DELTA], rows).unwrap()
    }

    #[test]
    fn sensitivity_uses_capped_rows() {
        let data = toy();
        let report = mechanism_test(&data, &MechanismOptions::default()).unwrap();
        let s = report.sensitivity.unwrap();
        let expect = data.rows().iter().filter(|r| r.covariates[1] <= 90.0).count();
        assert_eq!(s.n_patients, expect);
        assert_eq!(s.report.unwrap().n_patients, expect);
        assert_eq!(report.covariates.len(), 1);
    }

    #[test]
    fn naive_model_equals_refit_without_offset() {
        let data = toy();
        let table = dual_model_comparison(&data, None, &FitOptions::default()).unwrap();
        assert_eq!(table.rows.len(), 2);
        let direct = cox_fit(&data.select_covariates(&["x"]).unwrap(), &FitOptions::default()).unwrap();
        assert_eq!(table.rows[1].naive.unwrap().estimate, direct.beta[0]);
    }

    #[test]
    fn missing_offset_and_no_events() {
        let data = toy().select_covariates(&["x"]).unwrap();
        assert!(matches!(
            mechanism_test(&data, &MechanismOptions::default()),
            Err(PipelineError::UnknownCovariate(_))
        ));
        let rows = (0..5)
            .map(|i| SurvivalRow::new(1.0 + i as f64, false, vec![i as f64]))
            .collect();
        let none = SurvivalDataset::new([Z_DELTA], rows).unwrap();
        assert!(matches!(
            mechanism_test(&none, &MechanismOptions::default()),
            Err(PipelineError::NoEventsAfterLandmark)
        ));
    }
}
