//! Error type shared by every module.

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid configuration value or inconsistent parameters.
    #[error("config error: {0}")]
    Config(String),
    /// Malformed or out-of-range dataset content.
    #[error("dataset error at line {line}: {message}")]
    Dataset { line: usize, message: String },
    /// Invalid dataset content without a source line.
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    /// No dummy distribution meets the requested privacy target.
    #[error("calibration infeasible: {0}")]
    Infeasible(String),
    /// Decryption under a key that does not match the outer layer.
    #[error("decryption failed: wrong key")]
    WrongKey,
    /// Attempt to peel a layer off a payload.
    #[error("layer underflow: ciphertext has no layers left")]
    LayerUnderflow,
    /// Unsupported cipher parameters.
    #[error("unsupported cipher: {0}")]
    Unsupported(String),
    /// Bytes that do not decode to a well-formed value.
    #[error("decode error: {0}")]
    Decode(String),
    /// Input outside the domain of a hash function or estimator.
    #[error("out of domain: {0}")]
    Domain(String),
    /// Transport misuse, e.g. sending after close.
    #[error("transport error: {0}")]
    Transport(String),
    /// Protocol invariant violated during a run.
    #[error("protocol error: {0}")]
    Protocol(String),
    /// Injected randomness does not fit the run.
    #[error("replay error: {0}")]
    Replay(String),
    /// Filesystem failure.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
