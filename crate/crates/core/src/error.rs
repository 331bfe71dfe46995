use thiserror::Error;

/// Errors raised by the laboratory's analysis and training routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of range: {what} = {index} (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("invalid POMDP: {0}")]
    InvalidPomdp(String),

    #[error("invalid agent-state machine: {0}")]
    InvalidMachine(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("unreachable history: observation {observation} has zero probability after action {action}")]
    UnreachableHistory { action: usize, observation: usize },

    #[error("size cap exceeded: {what} needs more than {limit} entries (at depth {depth})")]
    SizeCap {
        what: &'static str,
        depth: usize,
        limit: usize,
    },

    #[error("power iteration did not converge within {iterations} sweeps (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("kernel matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    IndefiniteKernel(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("divergence detected at step {step}: |Q| = {magnitude} exceeds {limit}")]
    Divergence {
        step: u64,
        magnitude: f64,
        limit: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
