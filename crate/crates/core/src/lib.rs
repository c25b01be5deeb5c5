//! Knowledge-graph embeddings and binary effect prediction.
//!
//! The crate is organised bottom-up:
//!
//! - [`kg`]: triple loading, integer dictionaries, crawls, fingerprints and sparsity statistics.
//! - [`align`]: lexical entity alignment and its evaluation against a partial reference.
//! - [`kge`]: embedding tables and the nine triple scoring functions with exact gradients.
//! - [`train`]: negative sampling, ranking losses, Adam and the embedding training loop.
//! - [`effects`]: effect-record ingestion, normalisation and the four splitting strategies.
//! - [`classifier`]: the MLP effect classifier (one-hot, pre-trained and fine-tuned variants).
//! - [`eval`]: confusion metrics, Youden's index, run aggregation and explained variance.
//! - [`experiment`]: configuration and the end-to-end experiment driver.
//!
//! All randomness flows from explicit `u64` seeds, so every pipeline is reproducible.

pub mod align;
pub mod checkpoint;
pub mod classifier;
pub mod effects;
pub mod eval;
pub mod experiment;
pub mod kg;
pub mod kge;
pub mod matrix;
pub mod rng;
pub mod synthetic;
pub mod train;

mod error;

pub use error::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;
