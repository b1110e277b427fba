use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("state component {value} exceeds basis envelope {envelope} (agent {agent}, step {step})")]
    EnvelopeExceeded {
        value: f64,
        envelope: f64,
        agent: usize,
        step: usize,
    },
    #[error("non-finite value in {context} (agent {agent}, step {step})")]
    NonFinite {
        context: String,
        agent: usize,
        step: usize,
    },
    #[error("model dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("basis fingerprint mismatch: models over different bases cannot be averaged")]
    FingerprintMismatch,
    #[error("distance is zero with nonzero path-loss exponent")]
    ZeroDistance,
    #[error("step size {mu} violates the spectral bound 2/lambda_max = {bound}; recursion diverges")]
    StepSizeDiverges { mu: f64, bound: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
