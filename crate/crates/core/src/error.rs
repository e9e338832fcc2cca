use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the toolkit.
///
/// Variants map onto the CLI exit codes: `Usage` → 2, `Data` → 3,
/// `Solver` → 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Usage(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("subset enumeration refused: C({n},{k}) = {count} subsets exceeds the limit of {limit}")]
    EnumerationLimit {
        n: usize,
        k: usize,
        count: u128,
        limit: u128,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn solver(msg: impl Into<String>) -> Self {
        Error::Solver(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::EnumerationLimit { .. } => 2,
            Error::Data(_) | Error::Io(_) | Error::Json(_) => 3,
            Error::Solver(_) => 4,
        }
    }
}
