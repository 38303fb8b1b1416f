//! Active learning by query synthesis from a disentangled generator.
//!
//! The simulator grows a labeled set by synthesizing maximally uncertain
//! samples in the latent space of a class-conditional generator, then decides
//! per sample whether the class code can be trusted as a free label or the
//! (simulated) human oracle must be paid. Previously auto-labeled points are
//! re-checked every cycle so label noise gets filtered out as the learner
//! improves.
//!
//! Modules mirror the pipeline:
//!
//! - [`numerics`]: probability vectors, entropy, seeded RNG, finite-difference
//!   gradient oracle
//! - [`generator`]: the linear per-class decoder world with a configurable
//!   confusion model standing in for imperfect disentanglement
//! - [`learner`]: the classifier trained from scratch each cycle
//! - [`acquisition`]: gradient descent on latent vectors toward maximum
//!   predictive entropy
//! - [`dal`]: the labeling state machine (agreement rule, label correction,
//!   budget accounting)
//! - [`baselines`]: comparison strategies sharing the same world and learner
//! - [`config`] / [`report`]: experiment configuration, CSV metrics, and
//!   comparison tables

pub mod acquisition;
pub mod baselines;
pub mod config;
pub mod dal;
pub mod generator;
pub mod learner;
pub mod numerics;
pub mod report;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration document or derived settings are unusable.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API contract was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A computation produced or received a non-finite value.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Metrics files with incompatible schemas were combined.
    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: configuration problems exit 1,
    /// runtime failures exit 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Schema(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
