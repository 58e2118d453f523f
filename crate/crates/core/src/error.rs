//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the rotary analysis toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid frequency spec: {0}")]
    InvalidFreqSpec(String),

    #[error("invalid scaling method: {0}")]
    InvalidScaling(String),

    #[error("vector length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("vector length must be even, got {0}")]
    OddLength(usize),

    #[error("non-finite contribution value at index {0}")]
    NonFinite(usize),

    #[error("count {count} out of range 1..={max}")]
    CountOutOfRange { count: usize, max: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("need at least {need} tokens, got {got}")]
    TooFewTokens { need: usize, got: usize },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("fraction {0} outside [0, 1]")]
    FractionOutOfRange(f64),

    #[error("invalid model config: {0}")]
    InvalidModelConfig(String),

    #[error("weight tensor {name}: expected shape {expected:?}, got {got:?}")]
    WeightShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("missing weight tensor {0}")]
    MissingWeight(String),

    #[error("token id {id} out of vocabulary {vocab_size}")]
    UnknownTokenId { id: u32, vocab_size: usize },

    #[error("mask entry (layer {layer}, head {head}) out of model bounds")]
    MaskOutOfBounds { layer: usize, head: usize },

    #[error("unsupported forward combination: {0}")]
    UnsupportedForward(String),

    #[error("sequence too short: need at least {need} tokens, got {got}")]
    SequenceTooShort { need: usize, got: usize },

    #[error("context length {context_len} too short; minimum {min} tokens")]
    ContextTooShort { context_len: usize, min: usize },

    #[error("bad container magic: expected \"RSTN\", got {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated container record: {0}")]
    Truncated(String),

    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),

    #[error("shape inconsistency: {0}")]
    ShapeInconsistency(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
