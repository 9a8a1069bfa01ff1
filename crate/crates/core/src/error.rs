use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument lies outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Shapes, indices or model structure do not line up.
    #[error("structural error: {0}")]
    Structure(String),

    /// Operation not available in the model's mode.
    #[error("mode error: {0}")]
    Mode(String),

    /// A size limit or minimum size was violated.
    #[error("size error: {0}")]
    Size(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Row-level parse failures; each entry names the offending line.
    #[error("failed to parse {path}: {}", .problems.join("; "))]
    Parse { path: String, problems: Vec<String> },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Records that an external score file does not cover.
    #[error("score file is missing {} record id(s): {}", .ids.len(), preview(.ids))]
    MissingRecords { ids: Vec<String> },

    #[error("invalid scenario: {}", .0.iter().map(|f| format!("{}: {}", f.field, f.message)).collect::<Vec<_>>().join("; "))]
    Scenario(Vec<FieldError>),

    /// Objective could not be evaluated at the starting point.
    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// A validation message attached to a document field.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

fn preview(ids: &[String]) -> String {
    const SHOWN: usize = 10;
    let mut out = ids.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        out.push_str(", ...");
    }
    out
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
