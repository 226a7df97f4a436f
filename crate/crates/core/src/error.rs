use thiserror::Error;

/// Library-wide error type. `exit_code` maps variants onto the CLI contract:
/// 0 success, 2 config, 3 data, 4 divergence, 5 I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("metadata error: {0}")]
    Metadata(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("degenerate range: {0}")]
    DegenerateRange(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Divergence(_) => 4,
            Error::Io(_) => 5,
            _ => 3,
        }
    }
}
