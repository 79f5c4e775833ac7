use std::fmt;

use hydroode::evalbench::EvalError;
use hydroode::hydrodata::DataError;
use hydroode::models::ModelError;
use hydroode::training::TrainError;

/// Process exit codes. These values are part of the command-line contract.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VERIFICATION: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const DIVERGED: i32 = 4;
    pub const CORRUPT: i32 = 5;
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(exit::USAGE, message)
    }

    pub fn io(path: &std::path::Path, e: impl fmt::Display) -> Self {
        Self::new(exit::IO, format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let code = match e {
            DataError::Invalid(_) => exit::USAGE,
            DataError::Io { .. } => exit::IO,
            DataError::Format { .. } => exit::CORRUPT,
        };
        Self::new(code, e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let code = match e {
            ModelError::Io { .. } => exit::IO,
            ModelError::Corrupt(_) | ModelError::Version { .. } => exit::CORRUPT,
            ModelError::Tensor(_) | ModelError::Ode(_) => exit::VERIFICATION,
            ModelError::InvalidConfig(_) | ModelError::Input(_) | ModelError::Layer(_) => exit::USAGE,
        };
        Self::new(code, e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => m.into(),
            TrainError::Diverged { .. } | TrainError::NonFiniteGradient(_) => Self::new(exit::DIVERGED, e.to_string()),
            TrainError::Io { .. } => Self::new(exit::IO, e.to_string()),
            TrainError::Invalid(_) | TrainError::EmptyTrainSet => Self::usage(e.to_string()),
            TrainError::Tensor(_) => Self::new(exit::VERIFICATION, e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(m) => m.into(),
            EvalError::Io { .. } => Self::new(exit::IO, e.to_string()),
            EvalError::Invalid(_) | EvalError::ShapeMismatch { .. } | EvalError::Empty => {
                Self::new(exit::VERIFICATION, e.to_string())
            }
        }
    }
}
