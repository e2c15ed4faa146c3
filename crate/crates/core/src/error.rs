use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid modulus {0}: not a prime below 2^63")]
    InvalidModulus(u64),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Exhaustive enumeration refused; `required` and `limit` are in the
    /// budget's own unit (points, matrices, grid points).
    #[error("budget exceeded: {what} needs {required}, limit is {limit}")]
    Budget {
        what: String,
        required: u128,
        limit: u128,
    },

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Budget and cost-guard refusals, as opposed to bad input.
    pub fn is_budget(&self) -> bool {
        matches!(self, Error::Budget { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
