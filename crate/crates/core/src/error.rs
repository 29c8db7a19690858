use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid usage: {0}")]
    Usage(String),

    #[error("ingestion failed at row {row}, column {column}: {reason}")]
    Ingestion {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("training diverged at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    #[error("sigma calibration failed: {0}")]
    Calibration(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("efficacy error: {0}")]
    Efficacy(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Shape(_) => 2,
            Error::Ingestion { .. } | Error::Data(_) | Error::Io { .. } | Error::Json(_) => 3,
            Error::Numeric(_) | Error::Divergence { .. } | Error::Metric(_) | Error::Efficacy(_) => 4,
            Error::Calibration(_) => 5,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
