use doeblin::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for bad input, 3 for refused budgets, 4 for a broken invariant.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                Error::Parse(_)
                | Error::InvalidParameter(_)
                | Error::MissingRow { .. }
                | Error::BadRow { .. }
                | Error::AlphabetMismatch { .. }
                | Error::Domain(_) => 2,
                Error::BudgetExceeded { .. } | Error::NonLocal(_) => 3,
                Error::InvariantViolation { .. } => 4,
                _ => 1,
            },
            CliError::Io(_) => 1,
        }
    }
}
