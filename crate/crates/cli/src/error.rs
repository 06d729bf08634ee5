use thiserror::Error;

/// Command failure, carrying its documented exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Runtime(String),
    #[error("structural validation failed: {0}")]
    Structural(String),
    #[error("coverage check failed: {0}")]
    Coverage(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Runtime(_) => 1,
            Self::Structural(_) => 2,
            Self::Coverage(_) => 3,
            Self::Config(_) => 4,
        }
    }
}

impl From<hasten::Error> for CliError {
    fn from(e: hasten::Error) -> Self {
        match e {
            hasten::Error::Config(m) => Self::Config(m),
            hasten::Error::Tree(t) => Self::Structural(t.to_string()),
            other => Self::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(format!("i/o error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Runtime(format!("json error: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
