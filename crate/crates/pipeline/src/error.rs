use std::path::PathBuf;

use genvae::VaeError;
use latdiff::DiffError;
use nnkit::NnError;
use simpgen::SimpError;
use voxfem::FemError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no voxel reaches the threshold {threshold}")]
    EmptyDesign { threshold: f64 },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] SimpError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error(transparent)]
    Diffusion(#[from] DiffError),
}

impl PipelineError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
