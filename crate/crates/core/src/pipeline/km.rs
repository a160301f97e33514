use serde::{Deserialize, Serialize};

use crate::error::PipelineError;
use crate::survival::{km_estimate, KMCurve, SurvivalDataset, SurvivalRow, Z_DELTA};

/// Origin of the event clock for stratified survival curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeZero {
    /// Days since the landmark (T).
    Landmark,
    /// Days since vaccination (z_delta + T), every subject entering at 0.
    Vaccination,
}

/// Re-indexes landmark times to time since vaccination with entry 0.
pub fn vaccination_time_zero(dataset: &SurvivalDataset) -> Result<SurvivalDataset, PipelineError> {
    let z = dataset
        .covariate_index(Z_DELTA)
        .ok_or_else(|| PipelineError::UnknownCovariate(Z_DELTA.into()))?;
    let rows = dataset
        .rows()
        .iter()
        .map(|r| SurvivalRow {
            entry_time: 0.0,
            time: r.covariates[z] + r.time,
            ..r.clone()
        })
        .collect();
    Ok(SurvivalDataset::new(dataset.covariate_names().to_vec(), rows)?)
}

/// Upper edges of the closed bins; anything above the last edge falls in the open stratum.
fn bin_edges(max_z: f64, width: f64) -> Vec<f64> {
    let k = ((max_z / width).ceil() as usize).saturating_sub(1);
    (1..=k.max(1)).map(|i| i as f64 * width).collect()
}

fn label(lo: f64, hi: Option<f64>) -> String {
    match hi {
        Some(hi) => format!("({lo},{hi}]"),
        None => format!(">{lo}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmStrata {
    pub bin_width: f64,
    pub time_zero: TimeZero,
    /// Curves for non-empty strata, youngest offsets first.
    pub curves: Vec<KMCurve>,
    /// Labels of strata without any subject.
    pub empty_strata: Vec<String>,
}

/// Kaplan-Meier curves stratified by z_delta in bins (0,w], (w,2w], …, with a
/// final open stratum `>k·w` holding the largest offsets.
pub fn km_by_offset_bins(
    dataset: &SurvivalDataset,
    bin_width: f64,
    time_zero: TimeZero,
) -> Result<KmStrata, PipelineError> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(PipelineError::InvalidSchema(format!("bin width must be positive, got {bin_width}")));
    }
    let z = dataset
        .covariate_index(Z_DELTA)
        .ok_or_else(|| PipelineError::UnknownCovariate(Z_DELTA.into()))?;
    let data = match time_zero {
        TimeZero::Landmark => dataset.clone(),
        TimeZero::Vaccination => vaccination_time_zero(dataset)?,
    };
    let max_z = dataset.column(z).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let edges = bin_edges(max_z, bin_width);
    let single = max_z <= bin_width;

    let mut bins: Vec<(String, Box<dyn Fn(f64) -> bool>)> = Vec::new();
    let mut lo = 0.0;
    for &hi in &edges {
        bins.push((label(lo, Some(hi)), Box::new(move |v| v > lo && v <= hi)));
        lo = hi;
    }
    if !single {
        bins.push((label(lo, None), Box::new(move |v| v > lo)));
    }

    let mut out = KmStrata {
        bin_width,
        time_zero,
        curves: Vec::new(),
        empty_strata: Vec::new(),
    };
    for (name, contains) in bins {
        match data.filter_rows(|r| contains(r.covariates[z])) {
            Ok(stratum) => out.curves.push(km_estimate(&stratum, &name)?),
            Err(_) => out.empty_strata.push(name),
        }
    }
    Ok(out)
}

pub const KM_CSV_HEADER: [&str; 6] = ["stratum", "time", "survival", "ci_lower", "ci_upper", "at_risk"];

impl KmStrata {
    /// One row per event time per stratum, preceded by a time-0 row at S = 1.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(KM_CSV_HEADER)?;
        for c in &self.curves {
            w.write_record([c.stratum_label.as_str(), "0", "1", "1", "1", &c.n_rows.to_string()])?;
            for i in 0..c.times.len() {
                w.write_record([
                    c.stratum_label.clone(),
                    c.times[i].to_string(),
                    c.survival[i].to_string(),
                    c.ci_lower[i].to_string(),
                    c.ci_upper[i].to_string(),
                    c.at_risk[i].to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
