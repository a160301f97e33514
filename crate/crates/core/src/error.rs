use thiserror::Error;

/// Failures raised by dataset construction, Cox fitting, and Kaplan–Meier estimation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurvivalError {
    #[error("no events")]
    NoEvents,
    #[error("empty data")]
    Empty,
    #[error("dimension mismatch: expected {expected} covariates, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-identifiable: {0}")]
    NonIdentifiable(String),
    #[error("monotone likelihood / separation: {0}")]
    Separation(String),
    #[error("fit did not converge")]
    NotConverged,
    #[error("zero variance for coefficient {0}")]
    ZeroVariance(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HazardError {
    #[error("time {t} precedes vaccination day {v}")]
    BeforeVaccination { t: f64, v: f64 },
    #[error("negative cumulative hazard target {0}")]
    NegativeTarget(f64),
    #[error("invalid hazard specification: {0}")]
    InvalidSpec(String),
    #[error("invalid cohort configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("empty grid")]
    EmptyGrid,
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Hazard(#[from] HazardError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("missing column(s) in header: {0}")]
    MissingColumns(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid analysis window: {0}")]
    InvalidWindow(String),
    #[error("no events after landmark")]
    NoEventsAfterLandmark,
    #[error("column `{0}` not found in dataset")]
    UnknownCovariate(String),
    #[error(transparent)]
    Survival(#[from] SurvivalError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
