use povmap_core::{DiagnosticsError, IoError, LooError, ModelError, ReportError, SamplerError, SimError, SurveyError};
use thiserror::Error;

/// A failed command. The variant decides the exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration, missing files or columns.
    #[error("{0}")]
    Usage(String),
    /// Input data that parse but violate the model or design assumptions.
    #[error("{0}")]
    Data(String),
    /// Sampler or numerical failure.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match &e {
            IoError::MissingColumn { .. } | IoError::Schema { .. } | IoError::Json(_) | IoError::Io(_) => {
                CliError::Usage(e.to_string())
            }
            IoError::Csv(c) if matches!(c.kind(), csv::ErrorKind::Io(_)) => CliError::Usage(e.to_string()),
            IoError::Cell { .. } | IoError::Csv(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<SurveyError> for CliError {
    fn from(e: SurveyError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) => CliError::Usage(e.to_string()),
            ModelError::InvalidData(_)
            | ModelError::SamplingCovarianceNotPd(_)
            | ModelError::RankDeficient
            | ModelError::PluginOutOfRange(_)
            | ModelError::FamilyMismatch(_) => CliError::Data(e.to_string()),
            ModelError::InvalidParameterPoint | ModelError::ParameterLength { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<LooError> for CliError {
    fn from(e: LooError) -> Self {
        match e {
            LooError::MismatchedObservations(..) | LooError::Empty | LooError::TooFewDraws(_) => CliError::Data(e.to_string()),
            LooError::NonFinite | LooError::Numerical => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::InvalidThetaDraw(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}
