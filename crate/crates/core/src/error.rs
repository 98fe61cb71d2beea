use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("resource limit exceeded: {what} would need {requested}, cap is {cap}")]
    ResourceLimit {
        what: &'static str,
        requested: u128,
        cap: u128,
    },

    /// The stop condition could not be met because the infection died out.
    #[error("exhausted: {0}")]
    Exhausted(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("unstable estimate: {0}")]
    Unstable(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) | Error::Format(_) | Error::Json(_) | Error::Io(_) => 1,
            Error::Infeasible(_) | Error::Unstable(_) | Error::Exhausted(_) => 2,
            Error::ResourceLimit { .. } => 3,
        }
    }
}
