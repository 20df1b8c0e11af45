//! Frequency-aware stochastic gradient methods for sparse embedding learning.
//!
//! The crate is organised around the pieces of an embedding-learning run:
//!
//! - [`token_space`]: token distributions (exponential and polynomial tails,
//!   uniform), product joints over users × items, an alias-table sampler and
//!   exact occurrence counters.
//! - [`model`]: the stacked embedding table, the logistic dot-product and
//!   factorization-machine losses with hand-derived gradients, and exact
//!   population oracles.
//! - [`optim`]: SGD, frequency-aware SGD (known frequencies), counter-based
//!   frequency-aware SGD (online counts), Adagrad and Adam over row-sparse
//!   gradients.
//! - [`theory`]: small-instance oracles for unbiasedness, the variance
//!   sandwich, block smoothness and the tail speedup factors.
//! - [`data`]: MovieLens ingestion, binarization, splits and metric export.
//! - [`harness`]: configuration, training loop, evaluation and the
//!   subcommands behind the `freqsgd` binary.

pub mod csv;
pub mod data;
pub mod error;
pub mod harness;
pub mod model;
pub mod numeric;
pub mod optim;
pub mod rng;
pub mod theory;
pub mod token_space;

pub use error::{Error, Result};
