use thiserror::Error;

#[derive(Debug, Error)]
pub enum RfmError {
    #[error("point {x} lies outside [-{half_width}, {half_width}]")]
    Domain { x: f64, half_width: f64 },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("assembly failed: {0}")]
    Assembly(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("cannot parse expression `{input}`: {reason}")]
    Parse { input: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RfmError>;

pub(crate) fn arg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(RfmError::Argument(msg.into()))
}
