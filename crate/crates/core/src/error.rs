//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range. Carries the offending field name.
    #[error("invalid config value for `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    /// A domain invariant does not hold on constructed or loaded data.
    #[error("validation failed: {0}")]
    Validation(String),

    /// A per-sample invariant does not hold; names the sample.
    #[error("sample `{sample_id}`: {reason}")]
    InvalidSample { sample_id: String, reason: String },

    /// A submission references a sample the dataset does not contain.
    #[error("unknown sample id `{0}` in submission")]
    UnknownSampleId(String),

    /// A position fell outside a scene map.
    #[error("position ({x:.2}, {y:.2}) is outside the map bounds")]
    OutOfBounds { x: f64, y: f64 },

    /// A threshold table has no entry for a class present in the data.
    #[error("no threshold entry for class `{0}`")]
    MissingClass(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{what} requires at least {need} values, got {got}")]
    TooFewValues {
        what: &'static str,
        need: usize,
        got: usize,
    },

    /// Rank correlation is undefined when one input has no variation.
    #[error("rank correlation is undefined for constant input")]
    ConstantInput,

    /// A probability distribution does not sum to one within tolerance.
    #[error("distribution is not normalized: sum = {sum:.9}")]
    Unnormalized { sum: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },

    #[error("io error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
