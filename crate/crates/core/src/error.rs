use std::path::PathBuf;

/// Errors raised by the correction pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input data that cannot support the requested fit (too few rows, constant data, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A caller broke an operation's precondition (dimension mismatch, bad label, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// The base model made no errors on the data, so there is nothing to learn.
    #[error("corrector not needed: base model made no errors on {samples} samples")]
    CorrectorNotNeeded { samples: usize },

    /// No error type had enough samples to train the error-type classifier.
    #[error("no error type has at least {min_class} samples ({dropped} samples in undersized types)")]
    NoErrorTypes { min_class: usize, dropped: usize },

    /// The whitened error centroid coincides with the correct-set centre.
    #[error("degenerate error geometry: error centroid norm {norm:e}")]
    DegenerateErrorGeometry { norm: f64 },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed record: {message}")]
    Format { path: PathBuf, message: String },

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Coarse category used by front-ends to pick an exit status.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::Contract(_) | Error::Capacity(_) => ErrorCategory::Config,
            Error::Io { .. } | Error::Format { .. } | Error::Json(_) => ErrorCategory::Io,
            Error::Numeric(_) => ErrorCategory::Numeric,
            Error::Degenerate(_)
            | Error::CorrectorNotNeeded { .. }
            | Error::NoErrorTypes { .. }
            | Error::DegenerateErrorGeometry { .. }
            | Error::InsufficientSamples { .. } => ErrorCategory::DegenerateData,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Io,
    Numeric,
    DegenerateData,
}
