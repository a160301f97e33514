//! Cox proportional-hazards regression by maximum partial likelihood.
//!
//! Risk sets follow the counting-process convention: subject `k` is at risk at
//! time `t` when `entry_k < t <= time_k`, which covers delayed entry. Tied event
//! times are handled with either the Breslow or the Efron approximation.
//!
//! All risk-set sums are accumulated in a single sweep over distinct event
//! times in decreasing order, adding subjects as their exit time is reached and
//! removing them once the sweep passes below their entry time.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::dataset::SurvivalDataset;
use crate::error::SurvivalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiesMethod {
    Breslow,
    #[default]
    Efron,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub ties_method: TiesMethod,
    pub max_iterations: usize,
    /// Relative change in log partial likelihood that ends the iteration.
    pub tolerance: f64,
    pub confidence_level: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            ties_method: TiesMethod::Efron,
            max_iterations: 25,
            tolerance: 1e-9,
            confidence_level: 0.95,
        }
    }
}

impl FitOptions {
    pub fn with_ties(mut self, ties_method: TiesMethod) -> Self {
        self.ties_method = ties_method;
        self
    }

    pub fn validate(&self) -> Result<(), SurvivalError> {
        if !(self.tolerance > 0.0) {
            return Err(SurvivalError::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return Err(SurvivalError::InvalidArgument(format!(
                "confidence level must lie in (0,1), got {}",
                self.confidence_level
            )));
        }
        if self.max_iterations == 0 {
            return Err(SurvivalError::InvalidArgument(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Largest standardized score component accepted at a converged solution.
pub const SCORE_TOLERANCE: f64 = 1e-5;
/// Relative rounding noise tolerated in ℓ when accepting a Newton step.
const LOGLIK_ROUNDING: f64 = 1e-12;
/// Standardized coefficient magnitude treated as divergence.
pub const DIVERGENCE_BOUND: f64 = 50.0;
/// Smallest information eigenvalue, relative to the largest at β = 0, that signals monotone likelihood.
const INFORMATION_COLLAPSE: f64 = 1e-8;
const MAX_HALVINGS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub covariate_names: Vec<String>,
    pub beta: Vec<f64>,
    /// Inverse observed information at the estimate, original covariate scale.
    pub covariance: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    /// Log partial likelihood after each accepted Newton step, starting at β = 0.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// max |score| at the estimate with covariates standardized to unit scale.
    pub max_abs_score: f64,
    pub ties_method: TiesMethod,
    pub n_events: usize,
    pub n_rows: usize,
}

impl CoxFit {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.beta.len())
            .map(|j| self.covariance[j][j].max(0.0).sqrt())
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|n| n == name)
    }
}

struct EventGroup {
    time: f64,
    members: Vec<usize>,
}

/// Covariates after an affine transform, with the risk-set sweep order precomputed.
struct Design {
    n: usize,
    p: usize,
    x: Vec<f64>,
    time: Vec<f64>,
    entry: Vec<f64>,
    groups: Vec<EventGroup>,
    by_exit: Vec<usize>,
    by_entry: Vec<usize>,
}

struct Evaluation {
    loglik: f64,
    score: Vec<f64>,
    info: Vec<f64>,
}

impl Design {
    fn new(data: &SurvivalDataset, center: &[f64], scale: &[f64]) -> Self {
        let n = data.n_rows();
        let p = data.n_covariates();
        let mut x = Vec::with_capacity(n * p);
        let mut time = Vec::with_capacity(n);
        let mut entry = Vec::with_capacity(n);
        for row in data.rows() {
            x.extend(
                row.covariates
                    .iter()
                    .zip(center.iter().zip(scale))
                    .map(|(v, (c, s))| (v - c) / s),
            );
            time.push(row.time);
            entry.push(row.entry_time);
        }

        let mut by_exit: Vec<usize> = (0..n).collect();
        by_exit.sort_by(|&i, &j| time[j].total_cmp(&time[i]).then(i.cmp(&j)));
        let mut by_entry: Vec<usize> = (0..n).collect();
        by_entry.sort_by(|&i, &j| entry[j].total_cmp(&entry[i]).then(i.cmp(&j)));

        let mut groups: Vec<EventGroup> = Vec::new();
        for &k in &by_exit {
            if !data.rows()[k].event {
                continue;
            }
            match groups.last_mut() {
                Some(g) if g.time == time[k] => g.members.push(k),
                _ => groups.push(EventGroup {
                    time: time[k],
                    members: vec![k],
                }),
            }
        }

        Self {
            n,
            p,
            x,
            time,
            entry,
            groups,
            by_exit,
            by_entry,
        }
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.x[k * self.p..(k + 1) * self.p]
    }

    fn evaluate(&self, beta: &[f64], ties: TiesMethod, derivatives: bool) -> Evaluation {
        let p = self.p;
        let eta: Vec<f64> = (0..self.n)
            .map(|k| self.row(k).iter().zip(beta).map(|(x, b)| x * b).sum())
            .collect();
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();

        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![0.0; p * p];
        let mut t1 = vec![0.0; p];
        let mut t2 = vec![0.0; p * p];
        let mut mean = vec![0.0; p];

        let mut loglik = 0.0;
        let mut score = vec![0.0; p];
        let mut info = vec![0.0; p * p];

        let accumulate = |sign: f64, k: usize, s0: &mut f64, s1: &mut [f64], s2: &mut [f64]| {
            let wk = sign * w[k];
            *s0 += wk;
            if derivatives {
                let xk = self.row(k);
                for a in 0..p {
                    s1[a] += wk * xk[a];
                    for b in 0..=a {
                        s2[a * p + b] += wk * xk[a] * xk[b];
                    }
                }
            }
        };

        let (mut next_exit, mut next_entry) = (0, 0);
        for group in &self.groups {
            let t = group.time;
            while next_exit < self.n && self.time[self.by_exit[next_exit]] >= t {
                accumulate(1.0, self.by_exit[next_exit], &mut s0, &mut s1, &mut s2);
                next_exit += 1;
            }
            while next_entry < self.n && self.entry[self.by_entry[next_entry]] >= t {
                accumulate(-1.0, self.by_entry[next_entry], &mut s0, &mut s1, &mut s2);
                next_entry += 1;
            }

            let d = group.members.len();
            let mut t0 = 0.0;
            t1.iter_mut().for_each(|v| *v = 0.0);
            t2.iter_mut().for_each(|v| *v = 0.0);
            for &i in &group.members {
                loglik += eta[i];
                if derivatives {
                    for (s, x) in score.iter_mut().zip(self.row(i)) {
                        *s += x;
                    }
                }
                if ties == TiesMethod::Efron && d > 1 {
                    accumulate(1.0, i, &mut t0, &mut t1, &mut t2);
                }
            }

            for l in 0..d {
                let frac = match ties {
                    TiesMethod::Efron if d > 1 => l as f64 / d as f64,
                    _ => 0.0,
                };
                let denom = s0 - frac * t0;
                loglik -= denom.ln() + shift;
                if derivatives {
                    for a in 0..p {
                        mean[a] = (s1[a] - frac * t1[a]) / denom;
                        score[a] -= mean[a];
                    }
                    for a in 0..p {
                        for b in 0..=a {
                            info[a * p + b] +=
                                (s2[a * p + b] - frac * t2[a * p + b]) / denom - mean[a] * mean[b];
                        }
                    }
                }
            }
        }

        for a in 0..p {
            for b in 0..a {
                info[b * p + a] = info[a * p + b];
            }
        }
        Evaluation {
            loglik,
            score,
            info,
        }
    }
}

fn check_inputs(data: &SurvivalDataset, beta: &[f64]) -> Result<(), SurvivalError> {
    if data.n_events() == 0 {
        return Err(SurvivalError::NoEvents);
    }
    if beta.len() != data.n_covariates() {
        return Err(SurvivalError::DimensionMismatch {
            expected: data.n_covariates(),
            found: beta.len(),
        });
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(SurvivalError::InvalidArgument("beta must be finite".into()));
    }
    Ok(())
}

fn raw_design(data: &SurvivalDataset) -> Design {
    let p = data.n_covariates();
    Design::new(data, &vec![0.0; p], &vec![1.0; p])
}

/// Log partial likelihood ℓ(β) on the original covariate scale.
pub fn log_partial_likelihood(
    data: &SurvivalDataset,
    beta: &[f64],
    ties: TiesMethod,
) -> Result<f64, SurvivalError> {
    check_inputs(data, beta)?;
    Ok(raw_design(data).evaluate(beta, ties, false).loglik)
}

/// Gradient of ℓ and the observed information −∇²ℓ (as a dense p×p matrix).
pub fn score_and_information(
    data: &SurvivalDataset,
    beta: &[f64],
    ties: TiesMethod,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), SurvivalError> {
    check_inputs(data, beta)?;
    let p = beta.len();
    let ev = raw_design(data).evaluate(beta, ties, true);
    let info = ev.info.chunks(p.max(1)).map(<[f64]>::to_vec).collect();
    Ok((ev.score, info))
}

fn to_matrix(p: usize, values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(p, p, values)
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Fits the Cox model by Newton–Raphson with step-halving, starting from β = 0.
///
/// Covariates are centered and scaled internally; coefficients, covariance and
/// the likelihood are reported on the original scale.
pub fn cox_fit(data: &SurvivalDataset, options: &FitOptions) -> Result<CoxFit, SurvivalError> {
    options.validate()?;
    let p = data.n_covariates();
    if p == 0 {
        return Err(SurvivalError::InvalidArgument(
            "at least one covariate is required".into(),
        ));
    }
    if data.n_events() == 0 {
        return Err(SurvivalError::NoEvents);
    }
    let ties = options.ties_method;

    let n = data.n_rows() as f64;
    let mut center = vec![0.0; p];
    let mut scale = vec![0.0; p];
    for j in 0..p {
        let col = data.column(j);
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            return Err(SurvivalError::NonIdentifiable(format!(
                "covariate `{}` is constant",
                data.covariate_names()[j]
            )));
        }
        center[j] = mean;
        scale[j] = sd;
    }
    let design = Design::new(data, &center, &scale);

    let mut beta = vec![0.0; p];
    let mut current = design.evaluate(&beta, ties, true);
    let null_loglik = current.loglik;

    let eig = SymmetricEigen::new(to_matrix(p, &current.info)).eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if !(hi > 0.0) || lo <= 1e-10 * hi {
        return Err(SurvivalError::NonIdentifiable(
            "information matrix is singular at beta = 0".into(),
        ));
    }

    let mut trace = vec![current.loglik];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iterations {
        let Some(chol) = to_matrix(p, &current.info).cholesky() else {
            break;
        };
        let step = chol.solve(&DVector::from_column_slice(&current.score));

        // Near the optimum the gain falls below the rounding noise of ℓ; a
        // step is acceptable if it loses no more than that noise.
        let slack = LOGLIK_ROUNDING * current.loglik.abs().max(1.0);
        let mut factor = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let candidate: Vec<f64> = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + factor * s)
                .collect();
            let ll = design.evaluate(&candidate, ties, false).loglik;
            if ll.is_finite() && ll >= current.loglik - slack {
                accepted = Some(candidate);
                break;
            }
            factor *= 0.5;
        }
        let Some(next_beta) = accepted else {
            // No ascent direction left: at the optimum up to rounding, or stuck.
            converged = max_abs(&current.score) <= SCORE_TOLERANCE;
            break;
        };

        iterations += 1;
        let next = design.evaluate(&next_beta, ties, true);
        let change = (next.loglik - current.loglik).abs() / current.loglik.abs().max(f64::MIN_POSITIVE);
        beta = next_beta;
        current = next;
        trace.push(current.loglik);
        if change < options.tolerance && max_abs(&current.score) <= SCORE_TOLERANCE {
            converged = true;
            break;
        }
    }

    // A flat direction may be any combination of covariates, so compare eigenvalues.
    let lo_now = SymmetricEigen::new(to_matrix(p, &current.info))
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, &e| m.min(e));
    let collapsed = !(lo_now >= INFORMATION_COLLAPSE * hi);
    let diverged = max_abs(&beta) > DIVERGENCE_BOUND;
    if collapsed || diverged {
        return Err(SurvivalError::Separation(format!(
            "partial likelihood increases without bound (max |beta| = {:.3} on standardized scale)",
            max_abs(&beta)
        )));
    }

    let covariance_std = to_matrix(p, &current.info)
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| SurvivalError::NonIdentifiable("information matrix is singular at the estimate".into()))?;
    let covariance = (0..p)
        .map(|a| {
            (0..p)
                .map(|b| {
                    let v = 0.5 * (covariance_std[(a, b)] + covariance_std[(b, a)]);
                    v / (scale[a] * scale[b])
                })
                .collect()
        })
        .collect();

    Ok(CoxFit {
        covariate_names: data.covariate_names().to_vec(),
        beta: beta.iter().zip(&scale).map(|(b, s)| b / s).collect(),
        covariance,
        log_likelihood: current.loglik,
        null_log_likelihood: null_loglik,
        loglik_trace: trace,
        iterations,
        converged,
        max_abs_score: max_abs(&current.score),
        ties_method: ties,
        n_events: data.n_events(),
        n_rows: data.n_rows(),
    })
}
