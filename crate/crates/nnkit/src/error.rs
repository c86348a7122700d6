use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },
    #[error("checkpoint format error in {field}: {reason}")]
    Format { field: String, reason: String },
    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> NnError {
    NnError::ShapeMismatch {
        op,
        detail: detail.into(),
    }
}

pub(crate) fn format_err(field: impl Into<String>, reason: impl Into<String>) -> NnError {
    NnError::Format {
        field: field.into(),
        reason: reason.into(),
    }
}
