use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("diffusion chain exhausted at t={0}")]
    ChainExhausted(usize),

    #[error("numerical singularity: {0}")]
    NumericalSingularity(String),

    #[error("invalid sigma: sigma^2 = {sigma_sq} exceeds 1 - alpha_bar_s = {limit}")]
    InvalidSigma { sigma_sq: f64, limit: f64 },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("stale or mismatched gradient tape: {0}")]
    StaleTape(String),

    #[error("{path}: parse error at byte {offset}: {msg}")]
    Parse { path: PathBuf, offset: usize, msg: String },

    #[error("unsupported bit depth: maxval {0}")]
    UnsupportedDepth(u32),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("unknown config key `{key}`; valid keys: {valid}")]
    UnknownKey { key: String, valid: String },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
