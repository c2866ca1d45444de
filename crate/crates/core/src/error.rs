use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input {value} at neuron {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("fraction {0} lies outside [0, 1]")]
    FractionOutOfRange(f64),

    #[error("quadrature grid too coarse: {0} samples (need at least 2)")]
    GridTooCoarse(usize),

    #[error("action {action} is invalid for an environment with {count} actions")]
    InvalidAction { action: usize, count: usize },

    #[error("cannot sample from an empty replay buffer")]
    EmptyBuffer,

    #[error("state space too large: {size} exceeds the bound of {limit}")]
    StateSpaceTooLarge { size: usize, limit: usize },

    #[error("training diverged at step {step}: {reason}")]
    Divergence { step: u64, reason: String },

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: &[usize], actual: &[usize]) -> Self {
        Error::Shape {
            context,
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("bad value `{value}` for config key `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },

    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },

    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic: expected \"MCSFQF01\", found {0:?}")]
    BadMagic(Vec<u8>),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: String, expected: String },

    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),

    #[error("tensor `{name}` dims {dims:?} overflow the addressable size")]
    DimOverflow { name: String, dims: Vec<u32> },

    #[error("invalid UTF-8 in {0}")]
    Utf8(&'static str),

    #[error("checkpoint is missing tensor `{0}`")]
    MissingTensor(String),

    #[error("checkpoint is missing metadata key `{0}`")]
    MissingMetadata(String),

    #[error("checkpoint tensor `{name}` has dims {found:?}, expected {expected:?}")]
    TensorShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("{0} trailing bytes after the metadata section")]
    TrailingBytes(usize),
}
