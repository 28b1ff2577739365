use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: pitch {pitch} outside 0..=127")]
    PitchRange { line: usize, pitch: i64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("sequence is empty")]
    EmptySequence,

    #[error("observation {symbol} at position {position} is outside the alphabet of size {alphabet_size}")]
    SymbolOutOfAlphabet {
        position: usize,
        symbol: usize,
        alphabet_size: usize,
    },

    #[error("pitch {pitch} at position {position} is not in the training alphabet")]
    PitchOutOfAlphabet { position: usize, pitch: u8 },

    #[error("observation sequence has zero probability under the model (first failure at position {position})")]
    ZeroProbability { position: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("state space of size {size} exceeds the cap of {cap}; {hint}")]
    StateSpaceTooLarge {
        size: usize,
        cap: usize,
        hint: &'static str,
    },

    #[error("sequence of length {len} is too short: {requirement}")]
    TooShort { len: usize, requirement: String },

    #[error("numerically singular update at step {step}")]
    Singular { step: usize },

    #[error("non-finite value at position {position}")]
    NonFinite { position: usize },

    #[error("sequence has zero variance; correlation is undefined")]
    ZeroVariance,

    #[error("piece contains no {0} intervals")]
    NoIntervals(&'static str),

    #[error("unknown model id {0:?}; expected one of M1..M15")]
    UnknownModel(String),

    #[error("unknown criterion {given:?}; valid criteria: {valid}")]
    UnknownCriterion { given: String, valid: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
