//! Augmented shuffle protocols for differentially private frequency and
//! key-value statistics.
//!
//! Users encrypt their reports in layers, a shuffler samples, injects dummies
//! and permutes them, and a collector filters hash values before decrypting.
//! The crate contains the protocols, the dummy calibration and certification
//! machinery, analytic predictors, and poisoning attack harnesses.

pub mod analysis;
pub mod attacks;
pub mod config;
pub mod crypto;
pub mod data;
pub mod dummy;
pub mod error;
pub mod experiment;
pub mod hashing;
pub mod protocols;
pub mod replay;
pub mod rng;
pub mod transport;

pub use error::{Error, Result};
