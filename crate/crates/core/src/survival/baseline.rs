use serde::{Deserialize, Serialize};

use super::cox::CoxFit;
use super::dataset::SurvivalDataset;
use crate::error::SurvivalError;

/// Breslow estimate of the cumulative baseline hazard Λ₀ as a step function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard {
    pub times: Vec<f64>,
    pub cumulative_hazard: Vec<f64>,
}

impl BaselineHazard {
    pub fn at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 {
            0.0
        } else {
            self.cumulative_hazard[idx - 1]
        }
    }
}

/// Λ̂₀(t) = Σ_{t_j ≤ t} d_j / Σ_{k ∈ R_j} exp(x_k'β̂), with delayed-entry risk sets.
pub fn breslow_baseline(fit: &CoxFit, data: &SurvivalDataset) -> Result<BaselineHazard, SurvivalError> {
    if !fit.converged {
        return Err(SurvivalError::NotConverged);
    }
    if fit.beta.len() != data.n_covariates() {
        return Err(SurvivalError::DimensionMismatch {
            expected: data.n_covariates(),
            found: fit.beta.len(),
        });
    }
    let rows = data.rows();
    let risk: Vec<f64> = rows
        .iter()
        .map(|r| r.covariates.iter().zip(&fit.beta).map(|(x, b)| x * b).sum::<f64>().exp())
        .collect();

    let mut all_events: Vec<f64> = rows.iter().filter(|r| r.event).map(|r| r.time).collect();
    all_events.sort_by(f64::total_cmp);
    let mut event_times: Vec<f64> = Vec::new();
    let mut deaths: Vec<f64> = Vec::new();
    for t in all_events {
        if event_times.last() == Some(&t) {
            *deaths.last_mut().unwrap() += 1.0;
        } else {
            event_times.push(t);
            deaths.push(1.0);
        }
    }

    let mut by_exit: Vec<usize> = (0..rows.len()).collect();
    by_exit.sort_by(|&i, &j| rows[j].time.total_cmp(&rows[i].time));
    let mut by_entry: Vec<usize> = (0..rows.len()).collect();
    by_entry.sort_by(|&i, &j| rows[j].entry_time.total_cmp(&rows[i].entry_time));

    // Sweep downwards to get each risk-set sum, then accumulate upwards.
    let mut increments = vec![0.0; event_times.len()];
    let (mut s0, mut e, mut s) = (0.0, 0, 0);
    for (slot, &t) in event_times.iter().enumerate().rev() {
        while e < rows.len() && rows[by_exit[e]].time >= t {
            s0 += risk[by_exit[e]];
            e += 1;
        }
        while s < rows.len() && rows[by_entry[s]].entry_time >= t {
            s0 -= risk[by_entry[s]];
            s += 1;
        }
        increments[slot] = deaths[slot] / s0;
    }
    let cumulative_hazard = increments
        .iter()
        .scan(0.0, |acc, inc| {
            *acc += inc;
            Some(*acc)
        })
        .collect();
    Ok(BaselineHazard {
        times: event_times,
        cumulative_hazard,
    })
}
