use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::hazard::{CohortConfig, HazardSpec, DEFAULT_PRE_STRAIN_HAZARD};
use crate::rng::mix_seed;
use crate::survival::FitOptions;

/// The competing Cox analyses fitted to every simulated cohort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Landmark time zero; covariates z_delta (+ x1).
    ProposedOffset,
    /// Landmark time zero; x1 only.
    NaiveCalendar,
    /// Time since vaccination (z_delta + T) from entry 0; x1 only.
    VaccinationTime,
    /// Time since vaccination with delayed entry at z_delta; x1 only.
    VaccinationTimeDelayedEntry,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::ProposedOffset,
        EstimatorKind::NaiveCalendar,
        EstimatorKind::VaccinationTime,
        EstimatorKind::VaccinationTimeDelayedEntry,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::ProposedOffset => "proposed_offset",
            EstimatorKind::NaiveCalendar => "naive_calendar",
            EstimatorKind::VaccinationTime => "vaccination_time",
            EstimatorKind::VaccinationTimeDelayedEntry => "vaccination_time_delayed_entry",
        }
    }
}

/// One point of the simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    /// Stable identifier used for seeding; defaults to the position in the grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
    pub hazard: HazardSpec,
    pub n_subjects: usize,
    #[serde(default)]
    pub subgroup_enabled: bool,
    #[serde(default)]
    pub beta1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridVariant {
    NoSubgroup,
    WithSubgroup,
}

fn default_replications() -> usize {
    1000
}
fn default_alphas() -> Vec<f64> {
    vec![0.01, 0.05, 0.10]
}
fn default_estimators() -> Vec<EstimatorKind> {
    EstimatorKind::ALL.to_vec()
}
fn default_days() -> u32 {
    365
}
fn default_fraction() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: Vec<CellSpec>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    /// Thread-count hint; results do not depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "default_days")]
    pub vaccination_window_days: u32,
    #[serde(default = "default_days")]
    pub followup_days: u32,
    #[serde(default = "default_fraction")]
    pub subgroup_fraction: f64,
    #[serde(default)]
    pub fit: FitOptions,
}

/// Subgroup log hazard ratio used throughout the published grid.
pub const PAPER_BETA1: f64 = 0.15;
pub const PAPER_BASE_SEED: u64 = 20_210_701;
pub const DESK_MAX_REPLICATIONS: usize = 500;
pub const DESK_MAX_N: usize = 10_000;

impl ExperimentConfig {
    pub fn new(grid: Vec<CellSpec>) -> Self {
        Self {
            grid,
            replications: default_replications(),
            alphas: default_alphas(),
            base_seed: 0,
            estimators: default_estimators(),
            workers: None,
            vaccination_window_days: default_days(),
            followup_days: default_days(),
            subgroup_fraction: default_fraction(),
            fit: FitOptions::default(),
        }
    }

    pub fn cell_id(&self, index: usize) -> u64 {
        self.grid[index].id.unwrap_or(index as u64)
    }

    /// Cohort configuration for replication `rep` of grid cell `index`.
    pub fn cohort_config(&self, index: usize, rep: usize) -> CohortConfig {
        let cell = &self.grid[index];
        CohortConfig {
            n_subjects: cell.n_subjects,
            vaccination_window_days: self.vaccination_window_days,
            followup_days: self.followup_days,
            subgroup_enabled: cell.subgroup_enabled,
            beta1: cell.beta1,
            subgroup_fraction: self.subgroup_fraction,
            hazard: cell.hazard,
            seed: mix_seed(self.base_seed, self.cell_id(index), rep as u64),
            pool_chunk_factor: 2,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.grid.is_empty() {
            return Err(HarnessError::EmptyGrid);
        }
        if self.replications == 0 {
            return Err(HarnessError::InvalidConfig("replications must be at least 1".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(HarnessError::InvalidConfig(format!("alpha {a} outside (0,1)")));
        }
        if self.estimators.is_empty() {
            return Err(HarnessError::InvalidConfig("no estimators selected".into()));
        }
        self.fit
            .validate()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        let mut ids: Vec<u64> = (0..self.grid.len()).map(|i| self.cell_id(i)).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(HarnessError::InvalidConfig("duplicate cell ids".into()));
        }
        for i in 0..self.grid.len() {
            self.cohort_config(i, 0).validate()?;
        }
        Ok(())
    }

    /// Caps replications at 500 and drops cells with N above 10 000.
    pub fn desk_scale(mut self) -> Self {
        self.replications = self.replications.min(DESK_MAX_REPLICATIONS);
        self.grid.retain(|c| c.n_subjects <= DESK_MAX_N);
        self
    }
}

pub const WANING_LOWEST: f64 = 1e-4;
pub const WANING_HIGHEST: f64 = 7e-4;
pub const DURATIONS: [f64; 3] = [90.0, 180.0, 240.0];
pub const RATES_NO_SUBGROUP: [f64; 5] = [1e-6, 5e-6, 1e-5, 5e-5, 1e-4];
pub const RATES_WITH_SUBGROUP: [f64; 4] = [1e-8, 1e-7, 1e-6, 1e-5];
pub const STRAIN_HAZARDS: [f64; 5] = [1e-4, 5e-4, 1e-3, 5e-3, 1e-2];
pub const SAMPLE_SIZES: [usize; 4] = [500, 1000, 10_000, 100_000];

/// The published simulation grid, with B = 1000 and α ∈ {0.01, 0.05, 0.10}.
pub fn default_paper_grid(variant: GridVariant) -> ExperimentConfig {
    let (rates, subgroup, beta1, estimators): (&[f64], bool, f64, Vec<EstimatorKind>) = match variant {
        GridVariant::NoSubgroup => (&RATES_NO_SUBGROUP, false, 0.0, vec![EstimatorKind::ProposedOffset]),
        GridVariant::WithSubgroup => (&RATES_WITH_SUBGROUP, true, PAPER_BETA1, default_estimators()),
    };
    let mut grid = Vec::new();
    for &d in &DURATIONS {
        for &r in rates {
            for &n in &SAMPLE_SIZES {
                grid.push((HazardSpec::waning(WANING_LOWEST, WANING_HIGHEST, d, r), n));
            }
        }
    }
    for &c in &STRAIN_HAZARDS {
        for &n in &SAMPLE_SIZES {
            grid.push((
                HazardSpec::NewStrain {
                    k: DEFAULT_PRE_STRAIN_HAZARD,
                    c,
                    strain_day: None,
                },
                n,
            ));
        }
    }
    let offset = match variant {
        GridVariant::NoSubgroup => 0,
        GridVariant::WithSubgroup => 1000,
    };
    let grid = grid
        .into_iter()
        .enumerate()
        .map(|(i, (hazard, n_subjects))| CellSpec {
            id: Some(offset + i as u64),
            hazard,
            n_subjects,
            subgroup_enabled: subgroup,
            beta1,
        })
        .collect();
    ExperimentConfig {
        base_seed: PAPER_BASE_SEED,
        estimators,
        ..ExperimentConfig::new(grid)
    }
}
