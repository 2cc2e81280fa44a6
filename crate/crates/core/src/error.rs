use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("alphabet mismatch: expected {expected} symbols, found {found}")]
    AlphabetMismatch { expected: usize, found: usize },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("table row {row:?} is missing")]
    MissingRow { row: String },

    #[error("table row {row:?}: {reason}")]
    BadRow { row: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("enumeration budget exceeded: {required} entries required, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("construction error: {0}")]
    Construction(String),

    #[error("variation profile too short: index {needed} required, {available} available")]
    ProfileTooShort { needed: usize, available: usize },

    #[error("no admissible K up to {k_max}: {reason}")]
    NoAdmissibleK { k_max: u64, reason: String },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("depth mismatch: {0}")]
    DepthMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("too few samples: {got} given, at least {needed} required")]
    TooFewSamples { needed: usize, got: usize },

    #[error("non-local Doeblin function not supported here: {0}")]
    NonLocal(String),

    #[error("truncation error bound {bound:e} exceeds cap {cap:e}")]
    TruncationCap { bound: f64, cap: f64 },

    #[error("invariant violated at step {step}: agreement lower bound {kappa} < Y = {y}")]
    InvariantViolation { step: u64, kappa: u64, y: i64 },

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
