use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("direction {0} is outside the cosine-angle domain [-1, 1]")]
    InvalidDirection(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested gains or rates cannot be met by any admissible design.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("search space of {size} candidates exceeds the limit of {limit}")]
    SearchSpaceTooLarge { size: f64, limit: f64 },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("user {0} appears in more than one group")]
    DuplicateUser(u32),

    #[error("unknown user {0}")]
    UnknownUser(u32),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
