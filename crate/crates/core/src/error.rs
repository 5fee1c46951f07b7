use std::path::PathBuf;

use thiserror::Error;

use crate::mdp::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state index {index} out of range (model has {num_states} states)")]
    StateOutOfRange { index: usize, num_states: usize },

    #[error("model failed validation with {} violation(s); first: {}", .0.len(), .0[0])]
    InvalidModel(Vec<Violation>),

    #[error("non-finite value at state {state} after sweep {iteration}")]
    NonFinite { state: usize, iteration: usize },

    #[error("decision {decision} is not available in state {state}")]
    UnknownDecision { state: usize, decision: usize },

    #[error("policy covers {policy} states but model has {model}")]
    PolicyLength { policy: usize, model: usize },

    #[error("state space too large: {0}")]
    Overflow(String),

    #[error("{field}: value {value} outside alphabet {min}..={max}")]
    Alphabet {
        field: String,
        value: i64,
        min: i64,
        max: i64,
    },

    #[error("{field}: expected length {expected}, got {actual}")]
    Length {
        field: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no degradation probability for operating condition {condition} ({class} tool)")]
    MissingTableEntry { condition: u8, class: &'static str },

    #[error("empty successor distribution")]
    EmptyDistribution,

    #[error("malformed distribution: {0}")]
    MalformedDistribution(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("{0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn alphabet(field: impl Into<String>, value: i64, min: i64, max: i64) -> Self {
        Error::Alphabet {
            field: field.into(),
            value,
            min,
            max,
        }
    }
}
