use std::path::Path;

use patchstitch::dataset::DatasetError;
use patchstitch::raster::RasterError;
use patchstitch::StitchError;
use thiserror::Error;

/// Failure of a subcommand, carrying its process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unusable inputs or infeasible requests; exit status 2.
    #[error("{0}")]
    Usage(String),
    /// Failure to write outputs; exit status 3.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn write(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<DatasetError> for CliError {
    fn from(err: DatasetError) -> Self {
        CliError::Usage(err.to_string())
    }
}

impl From<StitchError> for CliError {
    fn from(err: StitchError) -> Self {
        match err {
            StitchError::Io { .. } | StitchError::Raster(RasterError::Encode(_)) => {
                CliError::Io(err.to_string())
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}
