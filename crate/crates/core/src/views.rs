//! Positive-view composition.
//!
//! An original sample and its augmented views are combined either by
//! concatenating inputs (tokens, frames) or by averaging per-view embeddings.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::corpus::{PairedSample, Text, Video};
use crate::{Error, Result};

pub const DEFAULT_MAX_TOKENS: usize = 77;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Composition {
    /// Original tokens/frames followed by each view's, truncated to the caps.
    #[default]
    Concat,
    /// Each view embedded separately; embeddings averaged and renormalized.
    MeanOfViewEmbeddings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewBundle {
    pub original: PairedSample,
    pub aug_texts: Vec<Text>,
    pub aug_videos: Vec<Video>,
    pub composition: Composition,
}

impl ViewBundle {
    pub fn new(
        original: PairedSample,
        aug_texts: Vec<Text>,
        aug_videos: Vec<Video>,
        composition: Composition,
    ) -> Result<Self> {
        let d = original.video.dim();
        if let Some(v) = aug_videos.iter().find(|v| v.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: v.dim(),
                context: format!("augmented view of {:?}", original.id),
            });
        }
        Ok(Self {
            original,
            aug_texts,
            aug_videos,
            composition,
        })
    }

    /// A bundle with no augmented views.
    pub fn plain(original: PairedSample) -> Self {
        Self {
            original,
            aug_texts: vec![],
            aug_videos: vec![],
            composition: Composition::Concat,
        }
    }

    /// Original caption followed by the text views.
    pub fn text_views(&self) -> Vec<&Text> {
        std::iter::once(&self.original.caption)
            .chain(self.aug_texts.iter())
            .collect()
    }

    /// Original video followed by the video views.
    pub fn video_views(&self) -> Vec<&Video> {
        std::iter::once(&self.original.video)
            .chain(self.aug_videos.iter())
            .collect()
    }

    /// Default frame cap: `frames_per_view * (1 + K_v)`.
    pub fn default_max_frames(&self, frames_per_view: usize) -> usize {
        frames_per_view * (1 + self.aug_videos.len())
    }
}

fn require_concat(bundle: &ViewBundle) -> Result<()> {
    if bundle.composition != Composition::Concat {
        return Err(Error::invalid(
            "input-level composition requested for a mean-of-view-embeddings bundle",
        ));
    }
    Ok(())
}

pub fn compose_text(bundle: &ViewBundle, max_tokens: usize) -> Result<Text> {
    require_concat(bundle)?;
    if bundle.aug_texts.is_empty() {
        return Ok(bundle.original.caption.clone());
    }
    let mut tokens: Vec<String> = bundle
        .text_views()
        .into_iter()
        .flat_map(|t| t.tokens().iter().cloned())
        .collect();
    if tokens.len() > max_tokens {
        debug!(
            "{}: truncating composed text from {} to {max_tokens} tokens",
            bundle.original.id,
            tokens.len()
        );
        tokens.truncate(max_tokens);
    }
    Text::from_tokens(tokens)
}

pub fn compose_video(bundle: &ViewBundle, max_frames: usize) -> Result<Video> {
    require_concat(bundle)?;
    let original = &bundle.original.video;
    if bundle.aug_videos.is_empty() {
        return Ok(original.clone());
    }
    let mut data = Vec::new();
    for v in bundle.video_views() {
        if v.dim() != original.dim() {
            return Err(Error::DimensionMismatch {
                expected: original.dim(),
                actual: v.dim(),
                context: format!("view of {:?}", bundle.original.id),
            });
        }
        data.extend_from_slice(v.as_flat());
    }
    let cap = max_frames.max(1) * original.dim();
    if data.len() > cap {
        debug!(
            "{}: truncating composed video to {max_frames} frames",
            bundle.original.id
        );
        data.truncate(cap);
    }
    Video::from_flat(original.id.clone(), original.dim(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn sample(caption: &str, frames: usize, dim: usize) -> PairedSample {
        PairedSample {
            id: "s".into(),
            video: Video::new("s", vec![vec![1.0; dim]; frames]).unwrap(),
            caption: tokenize(caption).unwrap(),
            extra_captions: vec![],
        }
    }

    #[test]
    fn zero_views_is_identity() {
        let s = sample("a b c", 12, 4);
        let b = ViewBundle::plain(s.clone());
        assert_eq!(compose_text(&b, 77).unwrap(), s.caption);
        assert_eq!(compose_video(&b, 12).unwrap(), s.video);
    }

    #[test]
    fn text_concatenation_and_truncation() {
        let b = ViewBundle::new(
            sample("a b c", 1, 2),
            vec![tokenize("d e").unwrap()],
            vec![],
            Composition::Concat,
        )
        .unwrap();
        let t = compose_text(&b, 77).unwrap();
        assert_eq!(t.tokens(), ["a", "b", "c", "d", "e"]);

        let long: String = (0..60).map(|i| format!("w{i} ")).collect();
        let view: String = (60..100).map(|i| format!("w{i} ")).collect();
        let b = ViewBundle::new(
            sample(&long, 1, 2),
            vec![tokenize(&view).unwrap()],
            vec![],
            Composition::Concat,
        )
        .unwrap();
        let t = compose_text(&b, 77).unwrap();
        assert_eq!(t.len(), 77);
        assert_eq!(t.tokens()[76], "w76");
    }

    #[test]
    fn video_concatenation() {
        let s = sample("a", 12, 3);
        let views = vec![
            Video::new("v1", vec![vec![2.0; 3]; 12]).unwrap(),
            Video::new("v2", vec![vec![3.0; 3]; 12]).unwrap(),
        ];
        let b = ViewBundle::new(s, vec![], views, Composition::Concat).unwrap();
        let v = compose_video(&b, 48).unwrap();
        assert_eq!(v.n_frames(), 36);
        assert_eq!(v.frame(0), [1.0; 3]);
        assert_eq!(v.frame(12), [2.0; 3]);
        assert_eq!(v.frame(35), [3.0; 3]);
        assert_eq!(b.default_max_frames(12), 36);
        assert_eq!(compose_video(&b, 20).unwrap().n_frames(), 20);
    }

    #[test]
    fn mismatched_view_dimension() {
        let bad = Video::new("v", vec![vec![0.0; 5]]).unwrap();
        assert!(ViewBundle::new(
            sample("a", 2, 3),
            vec![],
            vec![bad.clone()],
            Composition::Concat
        )
        .is_err());
        let mut b = ViewBundle::plain(sample("a", 2, 3));
        b.aug_videos.push(bad);
        assert!(compose_video(&b, 10).is_err());
    }

    #[test]
    fn mean_mode_rejects_input_composition() {
        let mut b = ViewBundle::plain(sample("a", 2, 3));
        b.composition = Composition::MeanOfViewEmbeddings;
        assert!(compose_text(&b, 77).is_err());
        assert_eq!(b.text_views().len(), 1);
    }
}
