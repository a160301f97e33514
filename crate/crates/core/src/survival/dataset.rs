use serde::{Deserialize, Serialize};

use crate::error::SurvivalError;

/// Column name under which the vaccination offset is stored.
pub const Z_DELTA: &str = "z_delta";

/// One analysis row. A subject is at risk on `(entry_time, time]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRow {
    #[serde(default)]
    pub entry_time: f64,
    pub time: f64,
    pub event: bool,
    pub covariates: Vec<f64>,
}

impl SurvivalRow {
    pub fn new(time: f64, event: bool, covariates: Vec<f64>) -> Self {
        Self {
            entry_time: 0.0,
            time,
            event,
            covariates,
        }
    }

    pub fn with_entry(mut self, entry_time: f64) -> Self {
        self.entry_time = entry_time;
        self
    }
}

/// Validated, immutable collection of survival rows sharing one covariate layout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalDataset {
    covariate_names: Vec<String>,
    rows: Vec<SurvivalRow>,
}

impl SurvivalDataset {
    pub fn new<S: Into<String>>(
        covariate_names: impl IntoIterator<Item = S>,
        rows: Vec<SurvivalRow>,
    ) -> Result<Self, SurvivalError> {
        let covariate_names: Vec<String> = covariate_names.into_iter().map(Into::into).collect();
        if rows.is_empty() {
            return Err(SurvivalError::Empty);
        }
        let p = covariate_names.len();
        for (i, row) in rows.iter().enumerate() {
            if row.covariates.len() != p {
                return Err(SurvivalError::DimensionMismatch {
                    expected: p,
                    found: row.covariates.len(),
                });
            }
            if !(row.entry_time.is_finite() && row.entry_time >= 0.0) {
                return Err(SurvivalError::InvalidData(format!(
                    "row {i}: entry time {} must be finite and nonnegative",
                    row.entry_time
                )));
            }
            if !(row.time.is_finite() && row.time > row.entry_time) {
                return Err(SurvivalError::InvalidData(format!(
                    "row {i}: time {} must exceed entry time {}",
                    row.time, row.entry_time
                )));
            }
            if let Some(x) = row.covariates.iter().find(|x| !x.is_finite()) {
                return Err(SurvivalError::InvalidData(format!(
                    "row {i}: non-finite covariate {x}"
                )));
            }
        }
        Ok(Self {
            covariate_names,
            rows,
        })
    }

    pub fn rows(&self) -> &[SurvivalRow] {
        &self.rows
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn n_events(&self) -> usize {
        self.rows.iter().filter(|r| r.event).count()
    }

    pub fn has_delayed_entry(&self) -> bool {
        self.rows.iter().any(|r| r.entry_time > 0.0)
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|n| n == name)
    }

    pub fn column(&self, index: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.covariates[index]).collect()
    }

    /// Keeps the named covariates, in the order given.
    pub fn select_covariates<S: AsRef<str>>(&self, names: &[S]) -> Result<Self, SurvivalError> {
        let idx = names
            .iter()
            .map(|n| {
                self.covariate_index(n.as_ref()).ok_or_else(|| {
                    SurvivalError::InvalidArgument(format!("unknown covariate `{}`", n.as_ref()))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let rows = self
            .rows
            .iter()
            .map(|r| SurvivalRow {
                covariates: idx.iter().map(|&j| r.covariates[j]).collect(),
                ..r.clone()
            })
            .collect();
        Ok(Self {
            covariate_names: names.iter().map(|n| n.as_ref().to_string()).collect(),
            rows,
        })
    }

    /// Subset of rows satisfying `keep`; fails if nothing remains.
    pub fn filter_rows(&self, keep: impl Fn(&SurvivalRow) -> bool) -> Result<Self, SurvivalError> {
        let rows: Vec<SurvivalRow> = self.rows.iter().filter(|r| keep(r)).cloned().collect();
        if rows.is_empty() {
            return Err(SurvivalError::Empty);
        }
        Ok(Self {
            covariate_names: self.covariate_names.clone(),
            rows,
        })
    }

    /// Applies `f` to covariate column `index`.
    pub fn map_covariate(&self, index: usize, f: impl Fn(f64) -> f64) -> Result<Self, SurvivalError> {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.covariates[index] = f(r.covariates[index]);
                r
            })
            .collect();
        Self::new(self.covariate_names.clone(), rows)
    }
}
