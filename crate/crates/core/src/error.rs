use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, node kinds or tree structure do not line up.
    #[error("structural error: {0}")]
    Structural(String),

    /// Input data is malformed (non-finite values, ragged dimensions, bad labels).
    #[error("data error: {0}")]
    Data(String),

    /// A gradient or loss became non-finite.
    #[error("numeric error in {param}: {message}")]
    Numeric { param: String, message: String },

    /// Configuration could not be parsed or violates its invariants.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used by the CLI error stream.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Structural(_) => "structural",
            Error::Data(_) => "data",
            Error::Numeric { .. } => "numeric",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn structural(msg: impl Into<String>) -> Error {
    Error::Structural(msg.into())
}

pub(crate) fn data(msg: impl Into<String>) -> Error {
    Error::Data(msg.into())
}
