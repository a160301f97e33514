use breakthrough_core::{HarnessError, HazardError, PipelineError, SurvivalError};

/// Failure classes with stable process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("{0}")]
    Degenerate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Degenerate(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<HazardError> for CliError {
    fn from(e: HazardError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            CliError::Io(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<SurvivalError> for CliError {
    fn from(e: SurvivalError) -> Self {
        match e {
            SurvivalError::NoEvents | SurvivalError::Empty => {
                CliError::Degenerate("no events after landmark".into())
            }
            SurvivalError::InvalidArgument(m) => CliError::Config(m),
            other => CliError::Degenerate(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::NoEventsAfterLandmark => CliError::Degenerate(e.to_string()),
            PipelineError::Survival(s) => s.into(),
            PipelineError::Csv(c) => c.into(),
            PipelineError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}
