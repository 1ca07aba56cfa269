use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in `{field}`: {value}")]
    NonFinite { field: String, value: f64 },

    #[error("{0}")]
    Contract(String),

    #[error("calibration set is empty")]
    EmptyCalibration,

    #[error("no calibration unit falls in the null class (Y <= c); same-class calibration is undefined")]
    EmptyNullClass,

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("test groups absent from training outcomes: {}", .0.join(", "))]
    UnknownGroups(Vec<String>),

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("row {row}, column `{column}`: {message}")]
    Row { row: usize, column: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Process exit code for the command-line front end: 2 for validation
    /// failures, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Csv { .. } | Error::Json(_) => 3,
            _ => 2,
        }
    }
}

pub(crate) fn check_finite(field: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite {
            field: field.to_string(),
            value,
        })
    }
}

pub(crate) fn check_level(q: f64) -> Result<f64> {
    if q > 0.0 && q < 1.0 {
        Ok(q)
    } else {
        Err(Error::contract("q must be in (0,1)"))
    }
}
