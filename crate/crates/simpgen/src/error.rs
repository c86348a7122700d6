use thiserror::Error;
use voxfem::FemError;

#[derive(Debug, Error)]
pub enum SimpError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("could not bracket the volume multiplier: {0}")]
    BisectionFailure(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("sampler gave up after {0} collinear support draws")]
    SamplerExhausted(usize),
    #[error("{failed} of {total} samples failed, above the 20% limit")]
    TooManyFailures { failed: usize, total: usize },
    #[error("malformed dataset {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl SimpError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        SimpError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
