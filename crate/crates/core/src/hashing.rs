//! Stable 64-bit hashing and seed derivation.
//!
//! Everything here is FNV-1a over explicit little-endian byte encodings so the
//! values are identical across platforms and releases.

use std::hash::Hasher;

use fnv::FnvHasher;
use sha2::{Digest, Sha256};

/// Incremental FNV-1a 64 builder over explicitly encoded fields.
#[derive(Default)]
pub struct Hash64(FnvHasher);

impl Hash64 {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u64(mut self, v: u64) -> Self {
        self.0.write(&v.to_le_bytes());
        self
    }

    /// Length-prefixed, so `("ab", "c")` and `("a", "bc")` differ.
    pub fn str(mut self, s: &str) -> Self {
        self.0.write(&(s.len() as u64).to_le_bytes());
        self.0.write(s.as_bytes());
        self
    }

    pub fn bytes(mut self, b: &[u8]) -> Self {
        self.0.write(b);
        self
    }

    pub fn finish(&self) -> u64 {
        self.0.finish()
    }
}

/// Per-sample seed: `hash64(run_seed, sample_id, view_index)`.
pub fn sample_seed(run_seed: u64, sample_id: &str, view_index: u64) -> u64 {
    Hash64::new()
        .u64(run_seed)
        .str(sample_id)
        .u64(view_index)
        .finish()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
