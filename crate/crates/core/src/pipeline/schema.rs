use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::PipelineError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateKind {
    /// 0/1 (or true/false) indicator.
    Binary,
    Continuous,
    /// One indicator per non-reference level. Levels default to the sorted observed values.
    Categorical {
        reference: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        levels: Option<Vec<String>>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub column: String,
    #[serde(flatten)]
    pub kind: CovariateKind,
    /// Display name for binary and continuous columns; defaults to the column name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl CovariateSpec {
    pub fn binary(column: &str) -> Self {
        Self {
            column: column.into(),
            kind: CovariateKind::Binary,
            label: None,
        }
    }

    pub fn continuous(column: &str) -> Self {
        Self {
            column: column.into(),
            kind: CovariateKind::Continuous,
            label: None,
        }
    }

    pub fn categorical(column: &str, reference: &str) -> Self {
        Self {
            column: column.into(),
            kind: CovariateKind::Categorical {
                reference: reference.into(),
                levels: None,
            },
            label: None,
        }
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn display_name(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.column)
    }
}

fn default_id() -> String {
    "id".into()
}
fn default_vaccination() -> String {
    "vaccination_date".into()
}
fn default_event() -> String {
    "event_date".into()
}

/// Column roles of a cohort CSV. Dates are ISO-8601 (YYYY-MM-DD); an empty
/// event date means no event was recorded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSchema {
    #[serde(default = "default_id")]
    pub id_column: String,
    #[serde(default = "default_vaccination")]
    pub vaccination_date_column: String,
    #[serde(default = "default_event")]
    pub event_date_column: String,
    #[serde(default)]
    pub covariates: Vec<CovariateSpec>,
}

impl CohortSchema {
    pub fn new(covariates: Vec<CovariateSpec>) -> Self {
        Self {
            id_column: default_id(),
            vaccination_date_column: default_vaccination(),
            event_date_column: default_event(),
            covariates,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut columns = vec![&self.id_column, &self.vaccination_date_column, &self.event_date_column];
        columns.extend(self.covariates.iter().map(|c| &c.column));
        let mut sorted = columns.clone();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(PipelineError::InvalidSchema(format!("column `{}` declared twice", w[0])));
        }
        for c in &self.covariates {
            if let CovariateKind::Categorical {
                reference,
                levels: Some(levels),
            } = &c.kind
            {
                if !levels.contains(reference) {
                    return Err(PipelineError::InvalidSchema(format!(
                        "reference level `{reference}` of `{}` is not among its levels",
                        c.column
                    )));
                }
            }
        }
        Ok(())
    }
}

pub const DEFAULT_SENSITIVITY_CAP_DAYS: u32 = 90;

fn default_cap() -> Option<u32> {
    Some(DEFAULT_SENSITIVITY_CAP_DAYS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisWindow {
    pub vaccination_start: NaiveDate,
    /// Landmark date L: analytic time zero.
    pub landmark: NaiveDate,
    /// Administrative censoring date.
    pub censor: NaiveDate,
    /// Offset cap for the recent-vaccinee sensitivity analysis; `null` disables it.
    #[serde(default = "default_cap")]
    pub sensitivity_cap_days: Option<u32>,
}

impl AnalysisWindow {
    pub fn new(vaccination_start: NaiveDate, landmark: NaiveDate, censor: NaiveDate) -> Self {
        Self {
            vaccination_start,
            landmark,
            censor,
            sensitivity_cap_days: default_cap(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.vaccination_start < self.landmark && self.landmark < self.censor) {
            return Err(PipelineError::InvalidWindow(format!(
                "need vaccination_start < landmark < censor, got {} / {} / {}",
                self.vaccination_start, self.landmark, self.censor
            )));
        }
        Ok(())
    }
}

/// The schema-plus-window JSON document accepted by the analysis commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub schema: CohortSchema,
    pub window: AnalysisWindow,
}

impl AnalysisConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| PipelineError::InvalidSchema(e.to_string()))?;
        config.schema.validate()?;
        config.window.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, PipelineError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
      "schema": {
        "covariates": [
          {"column": "sex", "kind": "binary", "label": "Male vs Female"},
          {"column": "race", "kind": "categorical", "reference": "NH White"},
          {"column": "age", "kind": "continuous"}
        ]
      },
      "window": {"vaccination_start": "2021-01-01", "landmark": "2021-07-01", "censor": "2021-12-01"}
    }"#;

    #[test]
    fn parses_with_defaults() {
        let c = AnalysisConfig::from_json(EXAMPLE).unwrap();
        assert_eq!(c.schema.id_column, "id");
        assert_eq!(c.window.sensitivity_cap_days, Some(90));
        assert_eq!(c.schema.covariates[0].display_name(), "Male vs Female");
        assert_eq!(
            c.schema.covariates[1].kind,
            CovariateKind::Categorical {
                reference: "NH White".into(),
                levels: None
            }
        );
        assert_eq!(AnalysisConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_windows_and_schemas() {
        let swapped = EXAMPLE.replace("2021-12-01", "2021-06-01");
        assert!(matches!(
            AnalysisConfig::from_json(&swapped),
            Err(PipelineError::InvalidWindow(_))
        ));
        assert!(matches!(
            AnalysisConfig::from_json("{not json"),
            Err(PipelineError::InvalidSchema(_))
        ));
        let dup = EXAMPLE.replace("\"age\"", "\"sex\"");
        assert!(AnalysisConfig::from_json(&dup).is_err());
        let mut schema = CohortSchema::new(vec![CovariateSpec::categorical("race", "X")]);
        schema.covariates[0].kind = CovariateKind::Categorical {
            reference: "X".into(),
            levels: Some(vec!["A".into()]),
        };
        assert!(schema.validate().is_err());
    }
}
