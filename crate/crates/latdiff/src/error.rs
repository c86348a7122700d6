use genvae::VaeError;
use nnkit::NnError;

#[derive(Debug, thiserror::Error)]
pub enum DiffError {
    #[error("invalid noise schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}
