use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input. `row` is the 1-based line in the file (header = 1),
    /// `column` the 1-based field index when known.
    #[error("format error at row {row}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Format {
        row: usize,
        column: Option<usize>,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("no assets left after dropping incomplete series")]
    EmptyUniverse,

    #[error("bad price for {ticker} on {date}: {message}")]
    Data {
        ticker: String,
        date: String,
        message: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    /// `pivot` is 0-based; `pivot + 1` is the order of the failing leading minor.
    #[error("matrix is not positive definite: pivot {} is {value:e}", pivot + 1)]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("matrix could not be conditioned with jitter up to {max_jitter:e}")]
    Irrecoverable { max_jitter: f64 },

    #[error("expected return vector is zero; no tangent direction exists")]
    NoDirection,

    #[error("portfolio variance {variance:e} is not positive")]
    DegenerateRisk { variance: f64 },

    #[error("transformed portfolio is the zero vector; angle undefined")]
    DegenerateAngle,

    #[error("cardinality k = {k} outside 1..={n}")]
    InvalidCardinality { k: usize, n: usize },

    #[error("sub-instance {subset:?}: {source}")]
    Subset {
        subset: Vec<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("performance ratio undefined: oracle Sharpe ratio {oracle_sharpe} is not positive")]
    UndefinedRatio { oracle_sharpe: f64 },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("invalid synthetic spec: {0}")]
    Spec(String),
}

impl Error {
    pub(crate) fn in_subset(self, subset: &[usize]) -> Self {
        match self {
            e @ Error::Subset { .. } => e,
            e => Error::Subset {
                subset: subset.to_vec(),
                source: Box::new(e),
            },
        }
    }
}
