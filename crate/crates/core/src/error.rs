use thiserror::Error;

/// Errors raised by parameter validation and by the transport solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{what} is not symmetric positive definite")]
    NotSpd { what: &'static str },

    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("instance of size {n} exceeds the limit of {max}")]
    TooLarge { n: usize, max: usize },

    #[error("not a permutation of 0..{n}")]
    InvalidPermutation { n: usize },

    #[error("non-finite velocity")]
    NonFinite,
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
