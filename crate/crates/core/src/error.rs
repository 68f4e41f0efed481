use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter dimension {0} (must be 1..={max})", max = crate::ad::MAX_PARAMS)]
    InvalidDimension(usize),

    #[error("arithmetic error at {site}: {reason}")]
    Arithmetic { site: &'static str, reason: &'static str },

    #[error("non-finite branch condition in sample {sample} at site {site:#x}")]
    NonFiniteCondition { sample: usize, site: u64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite program output for seed {seed:#018x}")]
    NonFiniteOutput { seed: u64 },

    #[error("insufficient data: need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("simulation diverged: agent {agent} at step {step} ({reason})")]
    Simulation { agent: usize, step: u64, reason: &'static str },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }
}
