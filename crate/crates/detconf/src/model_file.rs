//! Forest model persistence: thin path-based wrappers around the binary
//! codec in the core crate.

use std::path::{Path, PathBuf};

use detconf_core::forest::{ForestError, ForestModel};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: ForestError },
}

pub fn save_model(path: &Path, model: &ForestModel) -> Result<(), ModelFileError> {
    std::fs::write(path, model.encode()).map_err(|source| ModelFileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<ForestModel, ModelFileError> {
    let bytes = std::fs::read(path).map_err(|source| ModelFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ForestModel::decode(&bytes).map_err(|source| ModelFileError::Format {
        path: path.to_path_buf(),
        source,
    })
}
