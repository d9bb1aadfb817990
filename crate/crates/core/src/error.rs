use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error in {file}: {msg}")]
    Schema { file: String, msg: String },

    #[error("alignment error: {msg} (first offending timestamp {timestamp})")]
    Alignment { timestamp: String, msg: String },

    #[error("parse error in {file}, row {row}: {msg}")]
    Parse { file: String, row: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("reference error: {0}")]
    Reference(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("config error: {0}")]
    Config(String),

    /// The outcome is perfectly or quasi-perfectly predicted, or single-class.
    #[error("separation: {0}")]
    Separation(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tags the error with the stage it came from, unless already tagged.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// Innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by malformed or inconsistent inputs.
    pub fn is_validation(&self) -> bool {
        matches!(
            self.root(),
            Error::Schema { .. }
                | Error::Alignment { .. }
                | Error::Parse { .. }
                | Error::Validation(_)
                | Error::Reference(_)
                | Error::Config(_)
        )
    }

    /// True for estimation diagnostics such as separation.
    pub fn is_diagnostic(&self) -> bool {
        matches!(self.root(), Error::Separation(_) | Error::Estimation(_))
    }
}
