use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model or estimator parameter lies outside its admissible range.
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("tied value {value} in column {column} (strict tie policy)")]
    Tie { column: &'static str, value: f64 },

    #[error("index out of bounds: {0}")]
    Bounds(String),

    /// A numeric precondition failed at evaluation time (nonpositive
    /// threshold, vanishing denominator, ...).
    #[error("numeric domain error: {0}")]
    Domain(String),

    /// `a * eta >= 1/2`: the asymptotic variance is infinite, so no
    /// confidence interval exists for this `(a, eta)`.
    #[error("asymptotic variance undefined for a = {a}, eta = {eta} (requires a*eta < 1/2)")]
    VarianceDomain { a: f64, eta: f64 },

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("second-order estimation failed: {0}")]
    EstimationFailure(String),

    /// The adapted second-order parameter came out nonpositive.
    #[error("second-order sign convention violated: {0}")]
    Convention(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line tool: 3 for data and
    /// input problems, 4 for numeric-domain failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ParameterDomain(_)
            | Error::Domain(_)
            | Error::VarianceDomain { .. }
            | Error::Constraint(_)
            | Error::EstimationFailure(_)
            | Error::Convention(_)
            | Error::Bounds(_) => 4,
            Error::Tie { .. }
            | Error::InsufficientData(_)
            | Error::Parse { .. }
            | Error::Config(_)
            | Error::Io { .. }
            | Error::Csv(_) => 3,
        }
    }
}
