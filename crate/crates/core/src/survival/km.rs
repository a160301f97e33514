use serde::{Deserialize, Serialize};

use super::dataset::SurvivalDataset;
use super::normal::normal_quantile;
use crate::error::SurvivalError;

/// Product-limit survival estimate for one stratum.
///
/// `greenwood_se` is the standard error of S(t) itself; the confidence band is
/// built on the log scale, `exp(log S ± q·se(log S))`, clamped to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMCurve {
    pub stratum_label: String,
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub greenwood_se: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub n_events: Vec<usize>,
    pub n_rows: usize,
    pub confidence_level: f64,
}

impl KMCurve {
    /// S(t) as a right-continuous step function.
    pub fn survival_at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 {
            1.0
        } else {
            self.survival[idx - 1]
        }
    }

    /// (lower, upper) band value in force at time t.
    pub fn ci_at(&self, t: f64) -> (f64, f64) {
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 {
            (1.0, 1.0)
        } else {
            (self.ci_lower[idx - 1], self.ci_upper[idx - 1])
        }
    }
}

pub fn km_estimate(data: &SurvivalDataset, stratum_label: &str) -> Result<KMCurve, SurvivalError> {
    km_estimate_at_level(data, stratum_label, 0.95)
}

pub fn km_estimate_at_level(
    data: &SurvivalDataset,
    stratum_label: &str,
    confidence_level: f64,
) -> Result<KMCurve, SurvivalError> {
    if data.n_rows() == 0 {
        return Err(SurvivalError::Empty);
    }
    if data.has_delayed_entry() {
        return Err(SurvivalError::InvalidArgument(
            "Kaplan-Meier estimation requires entry time 0 for every row".into(),
        ));
    }
    let q = normal_quantile(0.5 * (1.0 + confidence_level))?;

    let mut obs: Vec<(f64, bool)> = data.rows().iter().map(|r| (r.time, r.event)).collect();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut curve = KMCurve {
        stratum_label: stratum_label.to_string(),
        times: Vec::new(),
        survival: Vec::new(),
        greenwood_se: Vec::new(),
        ci_lower: Vec::new(),
        ci_upper: Vec::new(),
        at_risk: Vec::new(),
        n_events: Vec::new(),
        n_rows: obs.len(),
        confidence_level,
    };

    let mut at_risk = obs.len();
    let mut surv = 1.0;
    let mut greenwood = 0.0;
    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].0;
        let mut j = i;
        let mut deaths = 0;
        while j < obs.len() && obs[j].0 == t {
            deaths += obs[j].1 as usize;
            j += 1;
        }
        if deaths > 0 {
            let (n, d) = (at_risk as f64, deaths as f64);
            surv *= 1.0 - d / n;
            let (se, lo, hi) = if deaths < at_risk {
                greenwood += d / (n * (n - d));
                let se_log = greenwood.sqrt();
                (
                    surv * se_log,
                    (surv.ln() - q * se_log).exp().clamp(0.0, 1.0),
                    (surv.ln() + q * se_log).exp().clamp(0.0, 1.0),
                )
            } else {
                // Everyone remaining fails: S = 0 and the log band is undefined.
                (0.0, 0.0, 0.0)
            };
            curve.times.push(t);
            curve.survival.push(surv);
            curve.greenwood_se.push(se);
            curve.ci_lower.push(lo.min(surv));
            curve.ci_upper.push(hi.max(surv));
            curve.at_risk.push(at_risk);
            curve.n_events.push(deaths);
        }
        at_risk -= j - i;
        i = j;
    }
    Ok(curve)
}
