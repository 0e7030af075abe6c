//! Simple augmentation: draw frames or tokens with replacement and keep source order.
//!
//! Drawing `n_out` indices uniformly from `0..n_items` and sorting them covers both
//! duplication and dropping. For two items and two draws the outcomes are
//! `[0,0]`, `[0,1]`, `[1,1]` with probabilities 1/4, 1/2, 1/4.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Text, Video};
use crate::{Error, Result};

/// Generator used for every seeded draw in this crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaConfig {
    /// Output frame count; `None` keeps the input length.
    pub n_out_frames: Option<usize>,
    /// Output token count; `None` keeps the input length.
    pub n_out_words: Option<usize>,
    pub seed: u64,
}

impl SaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_out_frames == Some(0) || self.n_out_words == Some(0) {
            return Err(Error::invalid(
                "simple augmentation output counts must be >= 1",
            ));
        }
        Ok(())
    }
}

/// `n_out` uniform draws from `0..n_items`, sorted ascending.
pub fn sample_indices_with_replacement_sorted<R: Rng + ?Sized>(
    n_items: usize,
    n_out: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if n_items == 0 || n_out == 0 {
        return Err(Error::invalid(format!(
            "cannot sample {n_out} of {n_items} items"
        )));
    }
    let mut idx: Vec<usize> = (0..n_out).map(|_| rng.random_range(0..n_items)).collect();
    idx.sort_unstable();
    Ok(idx)
}

pub fn simple_augment_text<R: Rng + ?Sized>(
    text: &Text,
    cfg: &SaConfig,
    rng: &mut R,
) -> Result<Text> {
    cfg.validate()?;
    let n_out = cfg.n_out_words.unwrap_or(text.len());
    let idx = sample_indices_with_replacement_sorted(text.len(), n_out, rng)?;
    Text::from_tokens(idx.iter().map(|&i| text.tokens()[i].clone()).collect())
}

pub fn simple_augment_video<R: Rng + ?Sized>(
    video: &Video,
    cfg: &SaConfig,
    rng: &mut R,
) -> Result<Video> {
    cfg.validate()?;
    let n_out = cfg.n_out_frames.unwrap_or(video.n_frames());
    let idx = sample_indices_with_replacement_sorted(video.n_frames(), n_out, rng)?;
    video.gather(&idx)
}
