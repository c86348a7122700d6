use std::path::PathBuf;

use nnkit::NnError;
use simpgen::SimpError;

#[derive(Debug, thiserror::Error)]
pub enum VaeError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] SimpError),
    #[error(transparent)]
    Fem(#[from] voxfem::FemError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl VaeError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
