//! Synthetic paired corpora with a known latent alignment.
//!
//! Each pair draws a unit latent `z` in `d_frame` dimensions. Video frames are
//! `z + noise * N(0, I)`. The caption spells out every coordinate of `z` as a
//! token `d<c>q<level>` after quantizing `z_c * sqrt(d)` to `levels` bins over
//! `[-2, 2]`; each token's level is replaced by a uniform draw with probability
//! `noise`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{DatasetSplit, PairedSample, SplitName, Text, Video};
use crate::hashing::Hash64;
use crate::simple::seeded_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    /// Training pairs.
    pub n_pairs: usize,
    /// Test pairs; defaults to `n_pairs`.
    pub n_test: Option<usize>,
    pub d_frame: usize,
    pub n_frames: usize,
    pub noise: f64,
    pub levels: usize,
    /// Corpus seed; defaults to the run seed.
    pub seed: Option<u64>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_pairs: 512,
            n_test: None,
            d_frame: 16,
            n_frames: 12,
            noise: 0.1,
            levels: 8,
            seed: None,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synthetic corpus: {m}")));
        if self.n_pairs < 4 {
            return bad(format!("n_pairs must be >= 4, got {}", self.n_pairs));
        }
        if self.n_test.is_some_and(|n| n < 2) {
            return bad("n_test must be >= 2".into());
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad(format!("noise must lie in [0, 1), got {}", self.noise));
        }
        if self.d_frame == 0 || self.n_frames == 0 {
            return bad("d_frame and n_frames must be >= 1".into());
        }
        if self.levels < 2 {
            return bad("levels must be >= 2".into());
        }
        Ok(())
    }

    pub fn n_test(&self) -> usize {
        self.n_test.unwrap_or(self.n_pairs)
    }

    /// Train and test splits; ids are `train00000…` and `test00000…`.
    pub fn generate(&self, seed: u64) -> Result<(DatasetSplit, DatasetSplit)> {
        self.validate().map_err(|e| Error::invalid(e.to_string()))?;
        let seed = self.seed.unwrap_or(seed);
        let split = |name: SplitName, tag: &str, n: usize| -> Result<DatasetSplit> {
            let samples = (0..n)
                .map(|i| self.sample(seed, tag, i))
                .collect::<Result<Vec<_>>>()?;
            DatasetSplit::new(name, samples)
        };
        Ok((
            split(SplitName::Train, "train", self.n_pairs)?,
            split(SplitName::Test, "test", self.n_test())?,
        ))
    }

    fn sample(&self, seed: u64, tag: &str, i: usize) -> Result<PairedSample> {
        let mut rng = seeded_rng(
            Hash64::new()
                .u64(seed)
                .str("synth")
                .str(tag)
                .u64(i as u64)
                .finish(),
        );
        let d = self.d_frame;
        let z = loop {
            let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-6 {
                break g.into_iter().map(|x| x / n).collect::<Vec<_>>();
            }
        };
        let frames = (0..self.n_frames)
            .map(|_| {
                z.iter()
                    .map(|&c| {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        (c + self.noise * g) as f32
                    })
                    .collect()
            })
            .collect();
        let scale = (d as f64).sqrt();
        let tokens = z
            .iter()
            .enumerate()
            .map(|(c, &zc)| {
                let mut q = quantize(zc * scale, self.levels);
                if rng.random::<f64>() < self.noise {
                    q = rng.random_range(0..self.levels);
                }
                format!("d{c}q{q}")
            })
            .collect();
        let id = format!("{tag}{i:05}");
        Ok(PairedSample {
            video: Video::new(id.clone(), frames)?,
            caption: Text::from_tokens(tokens)?,
            extra_captions: vec![],
            id,
        })
    }
}

fn quantize(x: f64, levels: usize) -> usize {
    let t = ((x + 2.0) / 4.0 * levels as f64).floor();
    t.clamp(0.0, (levels - 1) as f64) as usize
}

/// Train/test corpus of `n_pairs` pairs each.
pub fn synth_corpus(
    n_pairs: usize,
    d_frame: usize,
    n_frames: usize,
    noise: f64,
    seed: u64,
) -> Result<(DatasetSplit, DatasetSplit)> {
    SynthSpec {
        n_pairs,
        d_frame,
        n_frames,
        noise,
        ..SynthSpec::default()
    }
    .generate(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{check_disjoint, save_manifest};

    #[test]
    fn quantize_bins() {
        assert_eq!(quantize(-5.0, 8), 0);
        assert_eq!(quantize(-2.0, 8), 0);
        assert_eq!(quantize(0.0, 8), 4);
        assert_eq!(quantize(1.99, 8), 7);
        assert_eq!(quantize(9.0, 8), 7);
    }

    #[test]
    fn shape_and_disjoint_ids() {
        let (train, test) = synth_corpus(6, 5, 3, 0.2, 1).unwrap();
        assert_eq!((train.len(), test.len()), (6, 6));
        check_disjoint(&train, &test).unwrap();
        let s = &train.samples[0];
        assert_eq!((s.video.n_frames(), s.video.dim()), (3, 5));
        assert_eq!(s.caption.len(), 5);
        assert!(s.caption.tokens()[2].starts_with("d2q"));
    }

    #[test]
    fn noiseless_frames_are_the_latent() {
        let (train, _) = synth_corpus(4, 8, 2, 0.0, 3).unwrap();
        for s in &train.samples {
            assert_eq!(s.video.frame(0), s.video.frame(1));
            let n: f64 = s.video.frame(0).iter().map(|&x| f64::from(x).powi(2)).sum();
            assert!((n - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let write = |sub: &str, seed| {
            let (train, _) = synth_corpus(5, 4, 2, 0.0, seed).unwrap();
            let p = dir.path().join(sub);
            std::fs::create_dir_all(&p).unwrap();
            save_manifest(&train, &p.join("m.jsonl")).unwrap();
            let frames =
                std::fs::read(p.join("frames_train").join("000000_train00000.vtrf")).unwrap();
            (std::fs::read(p.join("m.jsonl")).unwrap(), frames)
        };
        assert_eq!(write("a", 9), write("b", 9));
        assert_ne!(write("c", 10).1, write("a", 9).1);
    }

    #[test]
    fn invalid_sizes() {
        assert!(synth_corpus(3, 4, 2, 0.0, 0).is_err());
        assert!(synth_corpus(4, 4, 2, 1.0, 0).is_err());
        assert!(synth_corpus(4, 4, 2, -0.1, 0).is_err());
        assert!(SynthSpec {
            n_pairs: 2,
            ..Default::default()
        }
        .validate()
        .unwrap_err()
        .is_config());
    }
}
