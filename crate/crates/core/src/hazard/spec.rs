//! Breakthrough-infection hazard mechanisms.
//!
//! Times are calendar days. A subject vaccinated on day `v` is at risk from `v`
//! onward, and a subgroup multiplier `m` scales the hazard proportionally.
//!
//! * Waning: with `u = t − v`, the daily hazard is `a` for `u ≤ d`, then rises
//!   linearly at rate `r` until it reaches `b` at `u_b = d + (b − a)/r`, and
//!   stays at `b` afterwards.
//! * New strain: the daily hazard is `k` before `strain_day` and `c` from then on,
//!   independent of the vaccination day.

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::HazardError;

/// Pre-strain hazard used when a new-strain spec leaves `k` unset.
pub const DEFAULT_PRE_STRAIN_HAZARD: f64 = 1e-4;

fn default_k() -> f64 {
    DEFAULT_PRE_STRAIN_HAZARD
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Waning,
    NewStrain,
}

impl Mechanism {
    pub fn label(self) -> &'static str {
        match self {
            Mechanism::Waning => "waning",
            Mechanism::NewStrain => "new_strain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "snake_case", deny_unknown_fields)]
pub enum HazardSpec {
    Waning {
        a: f64,
        b: f64,
        d: f64,
        r: f64,
    },
    NewStrain {
        #[serde(default = "default_k")]
        k: f64,
        c: f64,
        /// Calendar day of strain emergence; cohort generation fills in the landmark when unset.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        strain_day: Option<f64>,
    },
}

impl HazardSpec {
    pub fn waning(a: f64, b: f64, d: f64, r: f64) -> Self {
        HazardSpec::Waning { a, b, d, r }
    }

    pub fn new_strain(k: f64, c: f64, strain_day: f64) -> Self {
        HazardSpec::NewStrain {
            k,
            c,
            strain_day: Some(strain_day),
        }
    }

    pub fn mechanism(&self) -> Mechanism {
        match self {
            HazardSpec::Waning { .. } => Mechanism::Waning,
            HazardSpec::NewStrain { .. } => Mechanism::NewStrain,
        }
    }

    /// Copy with `strain_day` set to `day` if it was unset.
    pub fn with_default_strain_day(self, day: f64) -> Self {
        match self {
            HazardSpec::NewStrain {
                k,
                c,
                strain_day: None,
            } => HazardSpec::new_strain(k, c, day),
            other => other,
        }
    }

    pub fn validate(&self) -> Result<(), HazardError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(HazardError::InvalidSpec(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            HazardSpec::Waning { a, b, d, r } => {
                positive("a", a)?;
                positive("b", b)?;
                positive("r", r)?;
                if b < a {
                    return Err(HazardError::InvalidSpec(format!(
                        "highest hazard b={b} is below lowest hazard a={a}"
                    )));
                }
                if !(d >= 0.0 && d.is_finite()) {
                    return Err(HazardError::InvalidSpec(format!("d must be nonnegative, got {d}")));
                }
            }
            HazardSpec::NewStrain { k, c, strain_day } => {
                positive("k", k)?;
                positive("c", c)?;
                match strain_day {
                    Some(s) if !(s >= 0.0 && s.is_finite()) => {
                        return Err(HazardError::InvalidSpec(format!(
                            "strain_day must be nonnegative, got {s}"
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn strain_day(&self) -> Result<f64, HazardError> {
        match self {
            HazardSpec::NewStrain {
                strain_day: Some(s),
                ..
            } => Ok(*s),
            HazardSpec::NewStrain { strain_day: None, .. } => Err(HazardError::InvalidSpec(
                "strain_day must be set before evaluating a new-strain hazard".into(),
            )),
            HazardSpec::Waning { .. } => unreachable!("waning hazards have no strain day"),
        }
    }

    fn check(&self, v: f64, m: f64, t: f64) -> Result<(), HazardError> {
        if !(m > 0.0) {
            return Err(HazardError::InvalidSpec(format!("multiplier must be positive, got {m}")));
        }
        if t < v {
            return Err(HazardError::BeforeVaccination { t, v });
        }
        if let HazardSpec::NewStrain { .. } = self {
            self.strain_day()?;
        }
        Ok(())
    }

    /// Daily hazard at calendar day `t` for a subject vaccinated on day `v`.
    pub fn hazard_at(&self, v: f64, m: f64, t: f64) -> Result<f64, HazardError> {
        self.check(v, m, t)?;
        Ok(match *self {
            HazardSpec::Waning { a, b, d, r } => {
                let u = t - v;
                let ub = d + (b - a) / r;
                m * if u <= d {
                    a
                } else if u <= ub {
                    a + r * (u - d)
                } else {
                    b
                }
            }
            HazardSpec::NewStrain { k, c, .. } => {
                if t < self.strain_day()? {
                    m * k
                } else {
                    m * c
                }
            }
        })
    }

    /// Cumulative hazard accrued between vaccination day `v` and calendar day `t`.
    pub fn cumulative_hazard(&self, v: f64, m: f64, t: f64) -> Result<f64, HazardError> {
        self.check(v, m, t)?;
        Ok(self.cumulative_unchecked(v, m, t))
    }

    fn cumulative_unchecked(&self, v: f64, m: f64, t: f64) -> f64 {
        match *self {
            HazardSpec::Waning { a, b, d, r } => {
                let u = t - v;
                let ramp = (b - a) / r;
                m * if u <= d {
                    a * u
                } else if u <= d + ramp {
                    let s = u - d;
                    a * d + a * s + 0.5 * r * s * s
                } else {
                    a * d + a * ramp + 0.5 * r * ramp * ramp + b * (u - d - ramp)
                }
            }
            HazardSpec::NewStrain {
                k,
                c,
                strain_day: Some(s),
            } => m * (k * (t.min(s) - v).max(0.0) + c * (t - v.max(s)).max(0.0)),
            HazardSpec::NewStrain { strain_day: None, .. } => f64::NAN,
        }
    }

    /// Smallest calendar day `t` with `cumulative_hazard(v, m, t) = target`.
    pub fn invert_cumulative_hazard(&self, v: f64, m: f64, target: f64) -> Result<f64, HazardError> {
        if !(target >= 0.0) {
            return Err(HazardError::NegativeTarget(target));
        }
        self.check(v, m, v)?;
        Ok(self.invert_unchecked(v, m, target))
    }

    fn invert_unchecked(&self, v: f64, m: f64, target: f64) -> f64 {
        let e = target / m;
        match *self {
            HazardSpec::Waning { a, b, d, r } => {
                let at_d = a * d;
                if e <= at_d {
                    return v + e / a;
                }
                let ramp = (b - a) / r;
                let at_b = at_d + a * ramp + 0.5 * r * ramp * ramp;
                if e <= at_b {
                    // Positive root of r s²/2 + a s − (e − a d) = 0, rationalized
                    // so small r does not cancel.
                    let rest = e - at_d;
                    let s = 2.0 * rest / (a + (a * a + 2.0 * r * rest).sqrt());
                    v + d + s
                } else {
                    v + d + ramp + (e - at_b) / b
                }
            }
            HazardSpec::NewStrain {
                k,
                c,
                strain_day: Some(s),
            } => {
                if v < s {
                    let before = k * (s - v);
                    if e <= before {
                        v + e / k
                    } else {
                        s + (e - before) / c
                    }
                } else {
                    v + e / c
                }
            }
            HazardSpec::NewStrain { strain_day: None, .. } => f64::NAN,
        }
    }

    /// Event day by inversion of `−ln U`, with U drawn from the open interval (0, 1).
    pub fn draw_event_time<R: Rng + ?Sized>(&self, v: f64, m: f64, rng: &mut R) -> Result<f64, HazardError> {
        self.check(v, m, v)?;
        Ok(self.draw_unchecked(v, m, rng))
    }

    pub(crate) fn draw_unchecked<R: Rng + ?Sized>(&self, v: f64, m: f64, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        self.invert_unchecked(v, m, -u.ln())
    }
}
