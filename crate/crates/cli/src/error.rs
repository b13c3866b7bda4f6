use std::path::PathBuf;

use serde_json::{json, Value};
use thiserror::Error;
use tirefit::io::IoError;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INSUFFICIENT: i32 = 3;
pub const EXIT_OPTIMIZATION: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{file}: invalid value at `{field}`: {message}")]
    Config { file: PathBuf, field: String, message: String },
    #[error("{file}: {message}")]
    Parse { file: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Data { path: PathBuf, source: IoError },
    #[error(transparent)]
    Core(#[from] tirefit::Error),
    #[error("fit failed: {0}")]
    Fit(tirefit::Error),
}

fn core_code(e: &tirefit::Error) -> i32 {
    use tirefit::Error::*;
    match e {
        InsufficientCalibrationData { .. } | InsufficientLinearData { .. } | EmptyDataset => EXIT_INSUFFICIENT,
        NonFiniteObjective { .. } => EXIT_OPTIMIZATION,
        _ => EXIT_INPUT,
    }
}

fn core_kind(e: &tirefit::Error) -> &'static str {
    use tirefit::Error::*;
    match e {
        InsufficientCalibrationData { .. } => "insufficient_calibration_data",
        InsufficientLinearData { .. } => "insufficient_linear_data",
        EmptyDataset => "empty_dataset",
        NonFiniteObjective { .. } => "non_finite_objective",
        InvalidBounds(_) => "invalid_bounds",
        InvalidConfig(_) => "invalid_config",
        InvalidLog(_) => "invalid_log",
        _ => "invalid_input",
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => core_code(e),
            CliError::Data { source: IoError::Core(e), .. } => core_code(e),
            CliError::Fit(e) => match core_code(e) {
                EXIT_INPUT if !matches!(e, tirefit::Error::InvalidConfig(_) | tirefit::Error::InvalidBounds(_)) => {
                    EXIT_OPTIMIZATION
                }
                code => code,
            },
            _ => EXIT_INPUT,
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> Value {
        let mut body = json!({ "code": self.exit_code(), "message": self.to_string() });
        let extra = match self {
            CliError::Config { file, field, .. } => json!({ "kind": "config", "file": file, "field": field }),
            CliError::Parse { file, .. } => json!({ "kind": "parse", "file": file }),
            CliError::Usage(_) => json!({ "kind": "usage" }),
            CliError::Read { path, .. } => json!({ "kind": "read", "path": path }),
            CliError::Write { path, .. } => json!({ "kind": "write", "path": path }),
            CliError::Data { path, source } => match source {
                IoError::MissingColumn(c) => json!({ "kind": "missing_column", "path": path, "column": c }),
                IoError::BadValue { row, column, .. } => {
                    json!({ "kind": "bad_value", "path": path, "row": row, "column": column })
                }
                IoError::Core(e) => json!({ "kind": core_kind(e), "path": path }),
                _ => json!({ "kind": "malformed_input", "path": path }),
            },
            CliError::Core(e) | CliError::Fit(e) => json!({ "kind": core_kind(e) }),
        };
        if let (Value::Object(b), Value::Object(x)) = (&mut body, extra) {
            b.extend(x);
        }
        json!({ "error": body })
    }
}

pub type CliResult<T> = Result<T, CliError>;
