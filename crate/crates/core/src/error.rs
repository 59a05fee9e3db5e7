use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("design variable `{field}` = {value} outside [{lo}, {hi}]")]
    Bounds {
        field: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid specification input: {0}")]
    Spec(String),

    #[error("invalid test plan: {0}")]
    Plan(String),

    #[error("metric extraction failed: {0}")]
    Metrics(String),

    #[error("invalid optimizer configuration: {0}")]
    Config(String),

    #[error("config parse error{}: {message}", location_suffix(.line, .column))]
    Parse {
        message: String,
        line: Option<usize>,
        column: Option<usize>,
    },

    #[error("invalid config field `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("audit mismatch: {0}")]
    Audit(String),
}

fn location_suffix(line: &Option<usize>, column: &Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!(" at line {l}, column {c}"),
        (Some(l), None) => format!(" at line {l}"),
        _ => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
