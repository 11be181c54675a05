use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    Lattice(String),

    #[error("edge list line {line}: {message}")]
    EdgeList { line: usize, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("time {t} outside schedule range [0, {total}]")]
    TimeOutOfRange { t: f64, total: f64 },

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("{flagged} of {total} samples had non-finite amplitudes or local energies")]
    FlaggedSamples { flagged: usize, total: usize },

    #[error("N = {n} exceeds the dense-state cap of {cap} sites")]
    TooLarge { n: usize, cap: usize },

    #[error("norm drift {drift:e} at step {step} exceeds {limit:e}; use a smaller time step")]
    NormDrift { step: usize, drift: f64, limit: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code associated with this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Schedule(_) | Error::EdgeList { .. } | Error::Lattice(_) => 2,
            _ => 3,
        }
    }
}
