use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("no convergence: {msg} (last iterates {prev:e}, {last:e})")]
    NoConvergence { msg: String, prev: f64, last: f64 },
    #[error("non-finite value: {msg} at {at:?}")]
    NonFinite { msg: String, at: Vec<f64> },
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
