use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front-ends to pick exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input data, files, ranges or arguments.
    Data,
    /// Numerical failure: divergence, instability, non-finite values.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}: missing required column `{column}`")]
    MissingColumn { source_name: String, column: String },

    #[error("{source_name}: {message}")]
    Format { source_name: String, message: String },

    #[error("{source_name}: dates out of order at {date}")]
    Ordering { source_name: String, date: String },

    #[error("empty or invalid date range: {0}")]
    Range(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("window too short: need {needed} entries, got {got}")]
    Window { needed: usize, got: usize },

    #[error("non-finite value in {layer}")]
    Numeric { layer: String },

    #[error("compartment {compartment} left [0, 1] (value {value:e}); step size or parameters unstable")]
    Stability { compartment: &'static str, value: f64 },

    #[error("root not bracketed: {0}")]
    Bracket(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("sign constraint violated: {0}")]
    SignConstraint(String),

    #[error("simulation aborted on {date}: {source}")]
    Aborted {
        date: String,
        /// Last valid compartment fractions before the failing step.
        last: Box<crate::epi::Compartments>,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Numeric { .. }
            | Error::Stability { .. }
            | Error::Bracket(_)
            | Error::Diverged(_)
            | Error::SignConstraint(_)
            | Error::Aborted { .. } => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }

    /// Stable machine-readable tag for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingColumn { .. } => "missing_column",
            Error::Format { .. } => "format",
            Error::Ordering { .. } => "ordering",
            Error::Range(_) => "range",
            Error::Domain(_) => "domain",
            Error::Shape { .. } => "shape",
            Error::Window { .. } => "window",
            Error::Numeric { .. } => "numeric",
            Error::Stability { .. } => "stability",
            Error::Bracket(_) => "bracket",
            Error::Diverged(_) => "diverged",
            Error::SignConstraint(_) => "sign_constraint",
            Error::Aborted { .. } => "aborted",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(source_name: &str, message: impl Into<String>) -> Self {
        Error::Format {
            source_name: source_name.to_string(),
            message: message.into(),
        }
    }
}
