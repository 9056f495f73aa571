use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("entry {index} is negative ({value}); the point lies outside the positive orthant")]
    NegativeEntry { index: usize, value: f64 },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("state vector needs at least 2 agents, got {0}")]
    TooFewAgents(usize),

    #[error("matrix is not Metzler with zero row sums: {0}")]
    NotMetzler(String),

    /// A model evaluation broke the Metzler contract at a specific time and link.
    #[error("model contract violated at t = {t}: entry ({i}, {j}) = {value}")]
    ContractViolation { t: f64, i: usize, j: usize, value: f64 },

    #[error("euler step h = {h} with diagonal magnitude {lambda} gives h*lambda = {} > 1", h * lambda)]
    StepTooLarge { h: f64, lambda: f64 },

    #[error("samples do not cover [{t1}, {t2}]")]
    CoverageGap { t1: f64, t2: f64 },

    #[error("graph is not quasi-strongly connected")]
    NotQsc,

    #[error("matrix does not satisfy the contraction hypotheses: {0}")]
    Hypothesis(String),

    #[error("model `{0}` is not Metzler-certifiable")]
    NotCertifiable(&'static str),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter { name, value, reason }
    }
}
