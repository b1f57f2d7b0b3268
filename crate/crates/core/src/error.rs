use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mesh too coarse: {cells} cells (need at least 8)")]
    MeshTooCoarse { cells: usize },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A criterion whose hypotheses do not hold (e.g. Q = 0, missing (J5) data).
    #[error("criterion inapplicable: {0}")]
    Inapplicable(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
