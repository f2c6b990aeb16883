//! Simulator and statistics toolkit for control-induced phase transitions
//! (CIPTs) in adaptive monitored circuits.
//!
//! The crate evolves the Bernoulli circuit model (classical bit strings or
//! dense state vectors) and an absorbing-state bricklayer model, decomposes
//! observable fluctuations into circuit / trajectory / state contributions,
//! computes l1-coherence and first-domain-wall statistics, and extracts
//! critical exponents via finite-size-scaling collapse.

pub mod absorbing;
pub mod bernoulli;
pub mod bits;
pub mod experiment;
pub mod rng;
pub mod scaling;
pub mod state;
pub mod stats;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain violation: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("matrix is not unitary (max deviation {0:.3e})")]
    NonUnitary(f64),
    #[error("state norm corrupted: {0}")]
    NormCorruption(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("numeric invariant violated: {0}")]
    NumericInvariant(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
