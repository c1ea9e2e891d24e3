use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index out of range: {0}")]
    Range(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("numeric divergence at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("anomaly repair failed: {0}")]
    Repair(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("fold infeasible: {0}")]
    FoldInfeasible(String),

    #[error("truth required")]
    TruthRequired,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }

    /// Short machine-readable category used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::MissingFile(_) => "missing_file",
            Error::Validation(_) => "validation",
            Error::Dimension(_) => "dimension",
            Error::Range(_) => "range",
            Error::Numeric(_) => "numeric",
            Error::Divergence { .. } => "divergence",
            Error::InvalidParams(_) => "params",
            Error::Generation(_) => "generation",
            Error::Repair(_) => "repair",
            Error::UndefinedMetric(_) => "metric",
            Error::FoldInfeasible(_) => "fold",
            Error::TruthRequired => "truth",
        }
    }
}
