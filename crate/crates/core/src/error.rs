use std::fmt;
use std::path::PathBuf;

use chrono::NaiveDate;

pub type Result<T> = std::result::Result<T, Error>;

/// A single malformed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("I/O error on '{path}': {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error in '{file}': {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },

    /// Header is missing a required column.
    #[error("schema error in '{file}': {message}")]
    Schema { file: String, message: String },

    #[error("{} malformed row(s) in '{file}': {}", errors.len(), summarize_rows(errors))]
    Rows { file: String, errors: Vec<RowError> },

    #[error("cannot impute {column} on {date}: fewer than 3 prior days available")]
    Imputation { column: &'static str, date: NaiveDate },

    #[error("missing {what} for {date}")]
    MissingData { what: String, date: NaiveDate },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("unknown category '{value}' for {kind}")]
    UnknownCategory { kind: &'static str, value: String },

    #[error("feature mismatch; missing features: {}", missing.join(", "))]
    FeatureMismatch { missing: Vec<String> },

    #[error("labels are degenerate: {0}")]
    DegenerateLabels(String),

    #[error("loss diverged at iteration {iteration} (loss = {loss}); try a learning rate below {learning_rate}")]
    Divergence {
        iteration: usize,
        loss: f64,
        learning_rate: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("JSON error in '{file}': {source}")]
    Json {
        file: String,
        #[source]
        source: serde_json::Error,
    },
}

fn summarize_rows(errors: &[RowError]) -> String {
    const SHOWN: usize = 5;
    let mut out = errors
        .iter()
        .take(SHOWN)
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ");
    if errors.len() > SHOWN {
        out.push_str(&format!("; ... {} more", errors.len() - SHOWN));
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

    /// True for errors caused by bad input or configuration, as opposed to
    /// runtime or numeric failures.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::Divergence { .. } | Error::Json { .. }
        )
    }

    /// Process exit code: 1 for validation errors, 2 for runtime/numeric errors.
    pub fn exit_code(&self) -> i32 {
        if self.is_validation() {
            1
        } else {
            2
        }
    }
}
