use std::path::Path;

use bdg_core::datagen::DataError;
use bdg_core::eval::EvalError;
use bdg_core::model::ModelError;
use bdg_core::scm::ScmError;
use bdg_core::training::TrainError;
use thiserror::Error;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}:\n  {}", problems.join("\n  "))]
    Config { path: String, problems: Vec<String> },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        let numerical = match self {
            CliError::Train(e) => e.is_numerical(),
            CliError::Eval(e) => e.is_numerical(),
            _ => false,
        };
        if numerical {
            EXIT_NUMERICAL
        } else {
            EXIT_USAGE
        }
    }
}
