use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (vertex-count mismatch,
    /// wrong graph kind, out-of-range vertex, ...).
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// The request is well formed but exceeds a hard size limit.
    #[error("refused: {0}")]
    Refusal(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Contract(_) | Error::InvalidParameter(_) | Error::Parse { .. } => 2,
            Error::Refusal(_) => 3,
            Error::Config(_) => 2,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => 1,
        }
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
