use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PutError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),

    #[error("column {column} of transition matrix sums to {sum}")]
    NotStochastic { column: usize, sum: f64 },

    #[error("no transitions observed out of state {state} and smoothing is zero")]
    StarvedState { state: usize },

    #[error("power iteration did not converge after {iters} iterations (residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("observation {y} has zero probability under the current belief and action")]
    ZeroProbabilityObservation { y: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("enumeration needs {entries} entries, budget is {budget}")]
    Budget { entries: u128, budget: u128 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("training diverged at episode {episode}: running cost {running:.4} vs initial {initial:.4}")]
    Diverged {
        episode: usize,
        running: f64,
        initial: f64,
    },

    #[error("bisection failed: lambda in [{lo}, {hi}] gives distortion [{d_lo}, {d_hi}] for target {target}")]
    Bisection {
        lo: f64,
        hi: f64,
        d_lo: f64,
        d_hi: f64,
        target: f64,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for PutError {
    fn from(e: std::io::Error) -> Self {
        PutError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, PutError>;
