//! Augmentation laboratory for video-text retrieval.
//!
//! The crate covers the full desk-scale loop:
//!
//! - [`corpus`]: frame-feature videos, tokenized captions, manifests and the `VTRF` frame format.
//! - [`simple`]: order-preserving sampling with replacement over frames and tokens.
//! - [`generative`]: paraphrase/stylization prompts, the newline-delimited backend protocol,
//!   the content-addressed response cache and deterministic mock backends.
//! - [`views`]: composing original data with its augmented positive views.
//! - [`encode`]: hashed text features, linear projection heads, unit-norm embeddings.
//! - [`train`]: symmetric InfoNCE with analytic gradients, AdamW, cosine schedule, training loop.
//! - [`retrieve`]: ranking with deterministic tie-breaks, R@K, median and mean rank.
//! - [`experiment`]: configuration, synthetic corpora, run orchestration and report tables.

pub mod corpus;
pub mod encode;
pub mod error;
pub mod experiment;
pub mod generative;
pub mod hashing;
pub mod retrieve;
pub mod simple;
pub mod train;
pub mod views;

pub use error::{Error, Result};
