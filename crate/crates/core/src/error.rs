//! Error type shared by every layer of the crate.

use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Stage of the secure aggregation pipeline, attached to errors that
/// surface from inside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    SquaredNorm,
    DistanceSum,
    Rates,
    WeightedProduct,
    FinalDecryption,
    ModelUpdate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::SquaredNorm => "squared-norm",
            Stage::DistanceSum => "distance-sum",
            Stage::Rates => "rates",
            Stage::WeightedProduct => "weighted-product",
            Stage::FinalDecryption => "final-decryption",
            Stage::ModelUpdate => "model-update",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid ring parameters: {0}")]
    InvalidParams(String),
    #[error("unknown parameter preset `{0}`")]
    UnknownPreset(String),
    #[error("domain mismatch: expected {expected} representation")]
    DomainMismatch { expected: &'static str },
    #[error("level mismatch: {left} vs {right}")]
    LevelMismatch { left: usize, right: usize },
    #[error("basis mismatch between operands")]
    BasisMismatch,
    #[error("scale mismatch: {left} vs {right}")]
    ScaleMismatch { left: f64, right: f64 },
    #[error("no level left to drop")]
    LevelExhausted,
    #[error("message of length {len} exceeds capacity {capacity}")]
    CapacityExceeded { len: usize, capacity: usize },
    #[error("value {value} overflows the encoding bound {bound}")]
    EncodingOverflow { value: f64, bound: f64 },
    #[error("scalar {0} cannot be encoded at the current level")]
    ScalarOverflow(f64),
    #[error("expected a {expected}-component ciphertext, got {actual}")]
    ComponentCount { expected: usize, actual: usize },

    #[error("at least two users are required, got {0}")]
    TooFewUsers(usize),
    #[error("incomplete roster: missing user {0}")]
    MissingUser(u32),
    #[error("duplicate contribution from user {0}")]
    DuplicateUser(u32),
    #[error("user {0} is not part of the roster")]
    UnknownUser(u32),
    #[error("epoch mismatch: expected {expected}, got {actual}")]
    EpochMismatch { expected: u64, actual: u64 },
    #[error("ciphertexts do not share the common c1 component")]
    MismatchedC1,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("infeasible aggregator parameters: {0}")]
    Infeasible(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("malformed binary encoding: {0}")]
    Decode(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("configuration error: {0}")]
    Config(String),

    #[error("round {round}, stage {stage}: {source}")]
    Pipeline {
        round: u64,
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at(self, round: u64, stage: Stage) -> Error {
        Error::Pipeline {
            round,
            stage,
            source: Box::new(self),
        }
    }
}
