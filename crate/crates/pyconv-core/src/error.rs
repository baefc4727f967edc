//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents do not match what an operation requires.
    #[error("shape error: {0}")]
    Shape(String),
    /// A layer or network specification violates its construction rules.
    #[error("invalid spec: {0}")]
    Spec(String),
    /// A graph could not be built or executed.
    #[error("graph error: {0}")]
    Graph(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}

pub(crate) fn spec_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Spec(msg.into()))
}
