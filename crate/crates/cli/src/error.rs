use std::path::{Path, PathBuf};

use hybrid_ad_core::datagen::DatagenError;
use hybrid_ad_core::pipeline::PipelineError;
use thiserror::Error;

/// Exit status for malformed input files (CSV, TOML, model JSON).
pub const EXIT_PARSE: i32 = 3;
/// Exit status for well-formed input that fails validation or training.
pub const EXIT_VALIDATION: i32 = 4;
/// Exit status for filesystem failures.
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Datagen(#[from] DatagenError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse { .. } => EXIT_PARSE,
            Self::Io { .. } => EXIT_IO,
            Self::Validation(_) | Self::Pipeline(_) | Self::Datagen(_) => EXIT_VALIDATION,
        }
    }

    pub(crate) fn parse(path: &Path, message: impl ToString) -> Self {
        Self::Parse {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}
