use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("internal invariant violated: {0}")]
    InternalInvariantViolation(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("QP did not converge after {0} iterations")]
    NonConvergence(usize),
    #[error("box required by the objective is not indexed: {0}")]
    MissingBox(String),
    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),
    #[error("imputation undefined in arm {arm}: no observed government or non-participating choices")]
    ImputationUndefined { arm: u8 },
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("separation detected: {0}")]
    SeparationDetected(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
