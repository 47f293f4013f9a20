//! Stopping-set analysis of repeat multiple-accumulate (RMA) and hybrid
//! concatenated (HCC) code ensembles on the binary erasure channel.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: exact binomials, log-domain values, binary entropy.
//! * [`enumerators`]: constituent support enumerators and ensemble-average
//!   stopping-set size enumerators via uniform interleavers.
//! * [`finite_bounds`]: probabilistic lower bounds on the stopping distance.
//! * [`spectral`]: asymptotic spectral shapes and the growth-rate coefficient.
//! * [`codec_sim`]: encoders, the BEC, iterative MAP erasure decoding.
//! * [`brute_force`]: exhaustive oracles used to cross-check everything else.
//! * [`exit_analysis`]: EXIT functions and iterative decoding thresholds.
//! * [`cli`]: the `stopset` command-line driver.

pub mod brute_force;
pub mod cli;
pub mod codec_sim;
pub mod enumerators;
pub mod exit_analysis;
pub mod finite_bounds;
pub mod numerics;
pub mod spectral;

pub use enumerators::{EnsembleSpec, Family};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid ensemble: {0}")]
    InvalidSpec(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("size guard: {0}")]
    Guard(String),
    #[error("inconsistent evidence: {0}")]
    Inconsistent(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
