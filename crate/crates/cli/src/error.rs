use std::path::Path;

use graphy::data_io::DataError;
use graphy::evaluation::EvalError;
use graphy::model::ModelError;
use graphy::training::TrainError;

/// Exit status 2 for user or data errors, 1 for internal failures.
#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::User(_) => 2,
            CliError::Internal(_) => 1,
        }
    }

    pub fn io(path: impl AsRef<Path>, e: std::io::Error) -> Self {
        CliError::Internal(format!("{}: {e}", path.as_ref().display()))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::User(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Sidecar { .. }
            | ModelError::Config(_)
            | ModelError::Checkpoint(_)
            | ModelError::Geo(_)
            | ModelError::Data(_) => CliError::User(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Data(_) | TrainError::Checkpoint(_) | TrainError::Io { .. } | TrainError::Geo(_) => {
                CliError::User(e.to_string())
            }
            TrainError::Model(m) => m.into(),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Train(t) => t.into(),
            EvalError::Model(m) => m.into(),
            EvalError::TooFew { .. } | EvalError::Geo(_) | EvalError::Baseline(_) => CliError::User(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}
