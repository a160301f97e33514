//! Aggregation of replications into power, type I error, bias and coverage,
//! plus the long-format and per-figure CSV exports.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{EstimatorKind, ExperimentConfig};
use super::replication::{run_replication, ReplicationResult};
use crate::error::HarnessError;
use crate::hazard::{HazardSpec, Mechanism};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Power,
    Type1,
    MeanBias,
    Coverage,
}

/// One long-format result row. Hazard parameters not used by the mechanism are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub cell_id: u64,
    pub mechanism: Mechanism,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub d: Option<f64>,
    pub r: Option<f64>,
    pub k: Option<f64>,
    pub c: Option<f64>,
    #[serde(rename = "N")]
    pub n: usize,
    pub subgroup: bool,
    pub beta1: f64,
    pub estimator: EstimatorKind,
    pub metric: MetricKind,
    pub alpha: Option<f64>,
    pub value: f64,
    pub mc_se: f64,
    #[serde(rename = "B_effective")]
    pub b_effective: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub replications: usize,
    pub rows: Vec<MetricRow>,
}

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

fn template(config: &ExperimentConfig, index: usize) -> MetricRow {
    let cell = &config.grid[index];
    let hazard = cell
        .hazard
        .with_default_strain_day(config.vaccination_window_days as f64);
    let (mut a, mut b, mut d, mut r, mut k, mut c) = (None, None, None, None, None, None);
    match hazard {
        HazardSpec::Waning { a: a0, b: b0, d: d0, r: r0 } => {
            (a, b, d, r) = (Some(a0), Some(b0), Some(d0), Some(r0));
        }
        HazardSpec::NewStrain { k: k0, c: c0, .. } => {
            (k, c) = (Some(k0), Some(c0));
        }
    }
    MetricRow {
        cell_id: config.cell_id(index),
        mechanism: hazard.mechanism(),
        a,
        b,
        d,
        r,
        k,
        c,
        n: cell.n_subjects,
        subgroup: cell.subgroup_enabled,
        beta1: cell.beta1,
        estimator: EstimatorKind::ProposedOffset,
        metric: MetricKind::Power,
        alpha: None,
        value: f64::NAN,
        mc_se: f64::NAN,
        b_effective: 0,
    }
}

/// Aggregates the replications of one cell, given in replication order.
pub fn summarize_cell(config: &ExperimentConfig, index: usize, reps: &[ReplicationResult]) -> Vec<MetricRow> {
    let base = template(config, index);
    let cell = &config.grid[index];
    let mut rows = Vec::new();

    if config.estimators.contains(&EstimatorKind::ProposedOffset) {
        let p_values: Vec<f64> = reps.iter().filter_map(|r| r.offset.map(|o| o.p_delta)).collect();
        let metric = match base.mechanism {
            Mechanism::Waning => MetricKind::Power,
            Mechanism::NewStrain => MetricKind::Type1,
        };
        for &alpha in &config.alphas {
            let n = p_values.len();
            let rate = p_values.iter().filter(|&&p| p <= alpha).count() as f64 / n as f64;
            rows.push(MetricRow {
                metric,
                alpha: Some(alpha),
                value: rate,
                mc_se: binomial_se(rate, n),
                b_effective: n,
                ..base.clone()
            });
        }
    }

    if cell.subgroup_enabled {
        for &kind in &config.estimators {
            let fits: Vec<(f64, bool)> = reps
                .iter()
                .filter_map(|r| r.outcome(kind))
                .filter(|o| o.converged)
                .filter_map(|o| Some((o.beta1_hat?, o.covered?)))
                .collect();
            let n = fits.len();
            let mean = fits.iter().map(|f| f.0).sum::<f64>() / n as f64;
            let sd = if n > 1 {
                (fits.iter().map(|f| (f.0 - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            let coverage = fits.iter().filter(|f| f.1).count() as f64 / n as f64;
            rows.push(MetricRow {
                estimator: kind,
                metric: MetricKind::MeanBias,
                value: mean - cell.beta1,
                mc_se: sd / (n as f64).sqrt(),
                b_effective: n,
                ..base.clone()
            });
            rows.push(MetricRow {
                estimator: kind,
                metric: MetricKind::Coverage,
                value: coverage,
                mc_se: binomial_se(coverage, n),
                b_effective: n,
                ..base.clone()
            });
        }
    }
    rows
}

/// All replications of grid cell `index`, in replication order.
pub fn run_cell(config: &ExperimentConfig, index: usize) -> Result<Vec<ReplicationResult>, HarnessError> {
    (0..config.replications)
        .into_par_iter()
        .map(|rep| run_replication(config, index, rep))
        .collect()
}

pub fn run_grid(config: &ExperimentConfig) -> Result<MetricsTable, HarnessError> {
    run_grid_with(config, |_, _| {})
}

/// Runs the grid cell by cell, calling `on_cell` with each completed cell's rows.
///
/// Replications within a cell run in parallel on a pool sized by
/// `config.workers`; aggregation follows replication order, so the table is
/// identical for every worker count.
pub fn run_grid_with(
    config: &ExperimentConfig,
    mut on_cell: impl FnMut(usize, &[MetricRow]),
) -> Result<MetricsTable, HarnessError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::InvalidConfig(format!("thread pool: {e}")))?;
    let mut rows = Vec::new();
    for index in 0..config.grid.len() {
        let reps = pool.install(|| run_cell(config, index))?;
        let cell_rows = summarize_cell(config, index, &reps);
        on_cell(index, &cell_rows);
        rows.extend(cell_rows);
    }
    Ok(MetricsTable {
        replications: config.replications,
        rows,
    })
}

fn render(header: &[&str], records: impl IntoIterator<Item = Vec<String>>) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for rec in records {
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const METRICS_HEADER: [&str; 17] = [
    "cell_id", "mechanism", "a", "b", "d", "r", "k", "c", "N", "subgroup", "beta1", "estimator",
    "metric", "alpha", "value", "mc_se", "B_effective",
];

impl MetricsTable {
    pub fn find(
        &self,
        cell_id: u64,
        estimator: EstimatorKind,
        metric: MetricKind,
        alpha: Option<f64>,
    ) -> Option<&MetricRow> {
        self.rows.iter().find(|r| {
            r.cell_id == cell_id && r.estimator == estimator && r.metric == metric && r.alpha == alpha
        })
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(METRICS_HEADER)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    fn power_curve(&self, subgroup: bool) -> Result<String, csv::Error> {
        render(
            &["d", "r", "N", "alpha", "power", "mc_se", "B_effective"],
            self.rows
                .iter()
                .filter(|r| {
                    r.subgroup == subgroup && r.metric == MetricKind::Power && r.alpha == Some(0.05)
                })
                .map(|r| {
                    vec![
                        num(r.d),
                        num(r.r),
                        r.n.to_string(),
                        num(r.alpha),
                        r.value.to_string(),
                        r.mc_se.to_string(),
                        r.b_effective.to_string(),
                    ]
                }),
        )
    }

    /// Power against waning rate at α = 0.05 without subgroups.
    pub fn fig4_power_csv(&self) -> Result<String, csv::Error> {
        self.power_curve(false)
    }

    /// Power against waning rate at α = 0.05 with subgroups.
    pub fn fig_s2_power_csv(&self) -> Result<String, csv::Error> {
        self.power_curve(true)
    }

    /// Bias and coverage of β̂₁ against waning rate at d = 180.
    pub fn fig5_bias_coverage_csv(&self) -> Result<String, csv::Error> {
        let records = self
            .rows
            .iter()
            .filter(|r| r.subgroup && r.d == Some(180.0) && r.metric == MetricKind::MeanBias)
            .map(|bias| {
                let cov = self.find(bias.cell_id, bias.estimator, MetricKind::Coverage, None);
                vec![
                    num(bias.d),
                    num(bias.r),
                    bias.n.to_string(),
                    bias.estimator.label().to_string(),
                    bias.value.to_string(),
                    bias.mc_se.to_string(),
                    num(cov.map(|c| c.value)),
                    num(cov.map(|c| c.mc_se)),
                    bias.b_effective.to_string(),
                ]
            });
        render(
            &[
                "d",
                "r",
                "N",
                "estimator",
                "mean_bias",
                "bias_mc_se",
                "coverage",
                "coverage_mc_se",
                "B_effective",
            ],
            records,
        )
    }

    /// Bias of β̂₁ against new-strain hazard.
    pub fn fig_s3_bias_csv(&self) -> Result<String, csv::Error> {
        render(
            &["c", "N", "estimator", "mean_bias", "mc_se", "B_effective"],
            self.rows
                .iter()
                .filter(|r| r.mechanism == Mechanism::NewStrain && r.metric == MetricKind::MeanBias)
                .map(|r| {
                    vec![
                        num(r.c),
                        r.n.to_string(),
                        r.estimator.label().to_string(),
                        r.value.to_string(),
                        r.mc_se.to_string(),
                        r.b_effective.to_string(),
                    ]
                }),
        )
    }

    /// Type I error per (N, c) with one column per α.
    pub fn table_s1_type1_csv(&self) -> Result<String, csv::Error> {
        let type1: Vec<&MetricRow> = self.rows.iter().filter(|r| r.metric == MetricKind::Type1).collect();
        let mut alphas: Vec<f64> = type1.iter().filter_map(|r| r.alpha).collect();
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        let mut cells: Vec<u64> = Vec::new();
        for r in &type1 {
            if !cells.contains(&r.cell_id) {
                cells.push(r.cell_id);
            }
        }
        let alpha_cols: Vec<String> = alphas.iter().map(|a| format!("alpha_{a}")).collect();
        let mut header = vec!["N", "c", "subgroup"];
        header.extend(alpha_cols.iter().map(String::as_str));
        header.push("B_effective");
        let records = cells.iter().map(|&id| {
            let first = type1.iter().find(|r| r.cell_id == id).expect("cell has rows");
            let mut rec = vec![first.n.to_string(), num(first.c), first.subgroup.to_string()];
            for &a in &alphas {
                rec.push(num(type1
                    .iter()
                    .find(|r| r.cell_id == id && r.alpha == Some(a))
                    .map(|r| r.value)));
            }
            rec.push(first.b_effective.to_string());
            rec
        });
        render(&header, records)
    }
}
