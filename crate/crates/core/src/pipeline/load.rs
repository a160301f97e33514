use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::schema::{CohortSchema, CovariateKind};
use crate::error::PipelineError;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based line in the file; the header is line 1.
    pub line: usize,
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub line: usize,
    pub id: String,
    pub vaccination_date: NaiveDate,
    pub event_date: Option<NaiveDate>,
    pub covariates: Vec<f64>,
}

/// Parsed cohort rows with categorical columns expanded to indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCohort {
    pub covariate_names: Vec<String>,
    pub records: Vec<RawRecord>,
    pub errors: Vec<RowError>,
    pub n_input_rows: usize,
}

pub fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).map_err(|e| format!("invalid date `{s}`: {e}"))
}

fn parse_binary(s: &str) -> Result<f64, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Ok(1.0),
        "0" | "false" => Ok(0.0),
        other => Err(format!("invalid binary value `{other}`")),
    }
}

fn parse_continuous(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("invalid number `{s}`")),
    }
}

enum Encoder {
    Binary,
    Continuous,
    Categorical { reference: String, levels: Vec<String> },
}

pub fn load_cohort(path: &Path, schema: &CohortSchema) -> Result<RawCohort, PipelineError> {
    load_cohort_from_reader(std::fs::File::open(path)?, schema)
}

/// Parses a cohort CSV. Missing columns are a hard error; rows that fail to
/// parse are skipped and listed in `errors`.
pub fn load_cohort_from_reader<R: Read>(reader: R, schema: &CohortSchema) -> Result<RawCohort, PipelineError> {
    schema.validate()?;
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = csv.headers()?.clone();
    let position = |name: &str| header.iter().position(|h| h == name);
    let mut missing = Vec::new();
    let mut find = |name: &str| {
        let p = position(name);
        if p.is_none() {
            missing.push(name.to_string());
        }
        p.unwrap_or(0)
    };
    let id_col = find(&schema.id_column);
    let vacc_col = find(&schema.vaccination_date_column);
    let event_col = find(&schema.event_date_column);
    let cov_cols: Vec<usize> = schema.covariates.iter().map(|c| find(&c.column)).collect();
    if !missing.is_empty() {
        return Err(PipelineError::MissingColumns(missing.join(", ")));
    }

    let rows: Vec<csv::StringRecord> = csv.records().collect::<Result<_, _>>()?;

    let mut encoders = Vec::new();
    let mut names = Vec::new();
    for (spec, &col) in schema.covariates.iter().zip(&cov_cols) {
        match &spec.kind {
            CovariateKind::Binary => {
                encoders.push(Encoder::Binary);
                names.push(spec.display_name().to_string());
            }
            CovariateKind::Continuous => {
                encoders.push(Encoder::Continuous);
                names.push(spec.display_name().to_string());
            }
            CovariateKind::Categorical { reference, levels } => {
                let levels = match levels {
                    Some(l) => l.clone(),
                    None => {
                        let mut seen: Vec<String> = rows
                            .iter()
                            .map(|r| r.get(col).unwrap_or("").to_string())
                            .filter(|s| !s.is_empty())
                            .collect();
                        seen.sort();
                        seen.dedup();
                        if !rows.is_empty() && !seen.contains(reference) {
                            return Err(PipelineError::InvalidSchema(format!(
                                "reference level `{reference}` of `{}` never occurs",
                                spec.column
                            )));
                        }
                        seen
                    }
                };
                let levels: Vec<String> = levels.into_iter().filter(|l| l != reference).collect();
                names.extend(levels.iter().map(|l| format!("{l} vs {reference}")));
                encoders.push(Encoder::Categorical {
                    reference: reference.clone(),
                    levels,
                });
            }
        }
    }
    let mut sorted = names.clone();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(PipelineError::InvalidSchema(format!("covariate name `{}` is ambiguous", w[0])));
    }

    let mut cohort = RawCohort {
        covariate_names: names,
        records: Vec::with_capacity(rows.len()),
        errors: Vec::new(),
        n_input_rows: rows.len(),
    };
    for (i, row) in rows.iter().enumerate() {
        let line = i + 2;
        let id = row.get(id_col).unwrap_or("").to_string();
        let parsed = (|| -> Result<RawRecord, String> {
            let vaccination_date = parse_date(row.get(vacc_col).unwrap_or(""))?;
            let event = row.get(event_col).unwrap_or("");
            let event_date = if event.is_empty() { None } else { Some(parse_date(event)?) };
            let mut covariates = Vec::new();
            for (enc, &col) in encoders.iter().zip(&cov_cols) {
                let value = row.get(col).unwrap_or("");
                match enc {
                    Encoder::Binary => covariates.push(parse_binary(value)?),
                    Encoder::Continuous => covariates.push(parse_continuous(value)?),
                    Encoder::Categorical { reference, levels } => {
                        if value != reference && !levels.iter().any(|l| l == value) {
                            return Err(format!("unknown category `{value}`"));
                        }
                        covariates.extend(levels.iter().map(|l| f64::from(l == value)));
                    }
                }
            }
            Ok(RawRecord {
                line,
                id: id.clone(),
                vaccination_date,
                event_date,
                covariates,
            })
        })();
        match parsed {
            Ok(r) => cohort.records.push(r),
            Err(message) => cohort.errors.push(RowError { line, id, message }),
        }
    }
    Ok(cohort)
}
