use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The source could not be read at all.
    #[error("input error: {0}")]
    Input(String),

    /// The source was readable but its content is not in the expected format.
    #[error("format error: {message}")]
    Format {
        message: String,
        sample: Option<String>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called on an object that is not ready for it.
    #[error("state error: {0}")]
    State(String),

    #[error("capacity error: {0}")]
    Capacity(String),

    /// The attribution game has no players.
    #[error("degenerate game: {0}")]
    Degenerate(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format {
            message: msg.into(),
            sample: None,
        }
    }

    /// Short machine-readable code, used in API error bodies and CLI output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::State(_) => "state",
            Error::Capacity(_) => "capacity",
            Error::Degenerate(_) => "degenerate",
            Error::NotFound(_) => "not_found",
            Error::Io(_) => "io",
        }
    }
}
