//! Error type shared by all pipeline stages.

use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sample {index} has value {value}: x*1e3 + 1 must be positive")]
    NonPositiveArgument { index: usize, value: f64 },

    #[error("series length {len} is not divisible by alpha {alpha}")]
    LengthNotDivisible { len: usize, alpha: usize },

    #[error("window length {len} exceeds series length {available}")]
    WindowTooLong { len: usize, available: usize },

    #[error("expected series in {expected} domain, got {got}")]
    DomainMismatch { expected: String, got: String },

    #[error("unknown appliance type: {0}")]
    UnknownType(String),

    #[error("metadata file not found: {0}")]
    MissingMetadata(PathBuf),

    #[error("no appliance recordings in directory: {0}")]
    EmptyDirectory(PathBuf),

    #[error("scenario references unknown appliance id: {0}")]
    UnknownAppliance(String),

    #[error("input too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("solver did not converge after {iters} iterations (residual {residual:.3e})")]
    DidNotConverge { iters: usize, residual: f64 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("reconstruction head has {channels} channels, expected alpha = {alpha}")]
    ChannelCountNotAlpha { channels: usize, alpha: usize },

    #[error("loss became non-finite at update {update}: {diagnostic}")]
    NonFiniteLoss { update: usize, diagnostic: String },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },

    #[error("input sequence is empty")]
    EmptyInput,

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("training set contains a single class; need at least two")]
    SingleClass,

    #[error("checkpoint not found: {0}")]
    MissingCheckpoint(PathBuf),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
