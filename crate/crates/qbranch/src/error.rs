use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Structural mismatch between inputs (Q, n or grid bookkeeping).
    #[error("input error: {0}")]
    Input(String),

    /// A matching along a loop or stencil was ambiguous; the caller may
    /// refine the grid or perturb the field.
    #[error("ambiguous matching: {0}")]
    Collision(String),

    /// Fit window too short or otherwise unusable.
    #[error("fit error: {0}")]
    Fit(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
