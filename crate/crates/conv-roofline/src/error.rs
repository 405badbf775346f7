//! Crate-wide error type.

use crate::model::Method;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid layer shape: {0}")]
    InvalidLayer(String),

    #[error("invalid machine spec: {0}")]
    InvalidMachine(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no cost-table entry for {method} m={m} r={r}; {valid}")]
    MissingTableEntry {
        method: Method,
        m: u64,
        r: u64,
        /// Human-readable description of the covered (m, r) range.
        valid: String,
    },

    #[error("cost table is malformed: {0}")]
    MalformedTable(String),

    #[error("empty tile search space for {method} at r={r}: {detail}")]
    EmptySearchSpace {
        method: Method,
        r: u64,
        detail: String,
    },

    #[error(
        "cache of {cache_bytes} bytes cannot hold a single 1x1 channel block \
         (needs at least {} bytes)", 8 * beta
    )]
    InfeasibleCache { cache_bytes: u64, beta: u64 },

    #[error("{method} is not supported here: {detail}")]
    UnsupportedMethod { method: Method, detail: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error(
        "spectrum violates conjugate symmetry (relative deviation {deviation:.3e} \
         exceeds {tolerance:.0e}); input was not a real signal's spectrum"
    )]
    SymmetryViolation { deviation: f64, tolerance: f64 },

    #[error("length mismatch: predicted has {predicted} entries, measured has {measured}")]
    LengthMismatch { predicted: usize, measured: usize },

    #[error("measured value at index {0} is zero; relative error undefined")]
    ZeroMeasured(usize),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Config {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
