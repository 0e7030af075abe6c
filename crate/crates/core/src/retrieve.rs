//! Bidirectional retrieval evaluation.
//!
//! Ranks are 1-based. Ties are broken by gallery index: an item scoring exactly
//! as high as the target ranks ahead of it only if it comes earlier in the gallery.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encode::Embedding;
use crate::{Error, Result};

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Video,
    Text,
}

#[derive(Debug, Clone)]
pub struct Gallery {
    pub modality: Modality,
    ids: Vec<String>,
    items: Vec<Embedding>,
}

impl Gallery {
    pub fn new(modality: Modality, ids: Vec<String>, items: Vec<Embedding>) -> Result<Self> {
        if items.is_empty() || ids.len() != items.len() {
            return Err(Error::invalid(format!(
                "gallery needs >= 1 item and one id per item ({} ids, {} items)",
                ids.len(),
                items.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::DuplicateId(dup.clone()));
        }
        Ok(Self {
            modality,
            ids,
            items,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn scores(&self, query: &Embedding) -> Vec<f64> {
        self.items.iter().map(|g| query.dot(g)).collect()
    }
}

/// `1 + #{strictly higher} + #{equal with smaller index}`.
pub fn rank_in_scores(scores: &[f64], target: usize) -> usize {
    let t = scores[target];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| s > t || (s == t && j < target))
        .count()
}

pub fn rank_of_target(query: &Embedding, gallery: &Gallery, target_id: &str) -> Result<usize> {
    let target = gallery
        .index_of(target_id)
        .ok_or_else(|| Error::invalid(format!("target {target_id:?} not in gallery")))?;
    Ok(rank_in_scores(&gallery.scores(query), target))
}

fn check_ranks(ranks: &[usize]) -> Result<()> {
    if ranks.is_empty() {
        return Err(Error::invalid("no ranks"));
    }
    if ranks.contains(&0) {
        return Err(Error::invalid("ranks are 1-based"));
    }
    Ok(())
}

/// Percentage of ranks within the top `k`.
pub fn recall_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    check_ranks(ranks)?;
    let hits = ranks.iter().filter(|&&r| r <= k).count();
    Ok(100.0 * hits as f64 / ranks.len() as f64)
}

/// Middle rank; the mean of the two middle ranks for an even count.
pub fn median_rank(ranks: &[usize]) -> Result<f64> {
    check_ranks(ranks)?;
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    })
}

pub fn mean_rank(ranks: &[usize]) -> Result<f64> {
    check_ranks(ranks)?;
    Ok(ranks.iter().sum::<usize>() as f64 / ranks.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    T2v,
    V2t,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::T2v => "Text-to-Video",
            Direction::V2t => "Video-to-Text",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub direction: Direction,
    /// K -> recall percentage.
    pub r_at: BTreeMap<usize, f64>,
    pub mdr: f64,
    pub mnr: f64,
    pub n_queries: usize,
}

impl RetrievalReport {
    pub fn from_ranks(direction: Direction, ranks: &[usize], ks: &[usize]) -> Result<Self> {
        let r_at = ks
            .iter()
            .map(|&k| Ok((k, recall_at_k(ranks, k)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Self {
            direction,
            r_at,
            mdr: median_rank(ranks)?,
            mnr: mean_rank(ranks)?,
            n_queries: ranks.len(),
        })
    }

    /// `R@1 R@5 R@10 MdR MnR` to one decimal place.
    pub fn table_cells(&self) -> Vec<String> {
        self.r_at
            .values()
            .map(|v| format!("{v:.1}"))
            .chain([format!("{:.1}", self.mdr), format!("{:.1}", self.mnr)])
            .collect()
    }
}

/// How a video with several ground-truth captions is scored when it is the query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiCaptionPolicy {
    /// One rank per video: the best rank among its captions.
    #[default]
    BestRanked,
    /// One rank per (video, caption) pair.
    EachCaption,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    pub policy: MultiCaptionPolicy,
    /// Worker threads for per-query ranking; 0 or 1 runs on the calling thread.
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            ks: DEFAULT_KS.to_vec(),
            policy: MultiCaptionPolicy::default(),
            threads: 1,
        }
    }
}

fn map_queries<T: Send>(
    n: usize,
    threads: usize,
    f: impl Fn(usize) -> T + Sync + Send,
) -> Result<Vec<T>> {
    if threads <= 1 {
        return Ok((0..n).map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
}

/// Text-to-video and video-to-text reports. `text_owner[j]` is the index of the
/// video that text `j` describes; every video must own at least one text.
pub fn evaluate_bidirectional(
    videos: &[Embedding],
    texts: &[Embedding],
    text_owner: &[usize],
    opts: &EvalOptions,
) -> Result<(RetrievalReport, RetrievalReport)> {
    if videos.is_empty() || texts.is_empty() || texts.len() != text_owner.len() {
        return Err(Error::invalid(format!(
            "evaluation needs non-empty galleries and one owner per text ({} videos, {} texts, {} owners)",
            videos.len(),
            texts.len(),
            text_owner.len()
        )));
    }
    let mut owned: Vec<Vec<usize>> = vec![vec![]; videos.len()];
    for (j, &o) in text_owner.iter().enumerate() {
        owned
            .get_mut(o)
            .ok_or_else(|| Error::invalid(format!("text {j} owned by missing video {o}")))?
            .push(j);
    }
    if let Some(i) = owned.iter().position(Vec::is_empty) {
        return Err(Error::invalid(format!("video {i} has no caption")));
    }

    let t2v = map_queries(texts.len(), opts.threads, |j| {
        let scores: Vec<f64> = videos.iter().map(|v| texts[j].dot(v)).collect();
        rank_in_scores(&scores, text_owner[j])
    })?;
    let v2t_per_video = map_queries(videos.len(), opts.threads, |i| {
        let scores: Vec<f64> = texts.iter().map(|t| videos[i].dot(t)).collect();
        owned[i]
            .iter()
            .map(|&j| rank_in_scores(&scores, j))
            .collect::<Vec<_>>()
    })?;
    let v2t: Vec<usize> = match opts.policy {
        MultiCaptionPolicy::BestRanked => v2t_per_video
            .iter()
            .map(|r| *r.iter().min().expect("owned is non-empty"))
            .collect(),
        MultiCaptionPolicy::EachCaption => v2t_per_video.concat(),
    };
    Ok((
        RetrievalReport::from_ranks(Direction::T2v, &t2v, &opts.ks)?,
        RetrievalReport::from_ranks(Direction::V2t, &v2t, &opts.ks)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use proptest::prelude::*;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::from_unnormalized(Array1::from(v.to_vec()), "t").unwrap()
    }

    #[test]
    fn rank_examples() {
        let items = vec![emb(&[1.0, 0.0]), emb(&[0.0, 1.0]), emb(&[1.0, 1.0])];
        let g = Gallery::new(
            Modality::Video,
            vec!["a".into(), "b".into(), "c".into()],
            items,
        )
        .unwrap();
        assert_eq!(rank_of_target(&emb(&[0.0, 1.0]), &g, "b").unwrap(), 1);
        assert!(rank_of_target(&emb(&[0.0, 1.0]), &g, "zz").is_err());

        // Target tied with an earlier item.
        assert_eq!(rank_in_scores(&[0.5, 0.5, 0.1], 1), 2);
        assert_eq!(rank_in_scores(&[0.5, 0.5, 0.1], 0), 1);
        // Least similar of five.
        assert_eq!(rank_in_scores(&[0.9, 0.7, 0.5, 0.3, 0.1], 4), 5);
    }

    #[test]
    fn gallery_validation() {
        assert!(Gallery::new(Modality::Text, vec![], vec![]).is_err());
        assert!(Gallery::new(
            Modality::Text,
            vec!["a".into(), "a".into()],
            vec![emb(&[1.0, 0.0]), emb(&[0.0, 1.0])]
        )
        .is_err());
    }

    #[test]
    fn metric_examples() {
        assert_eq!(recall_at_k(&[1, 1, 1], 1).unwrap(), 100.0);
        assert!((recall_at_k(&[1, 3, 7], 5).unwrap() - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(recall_at_k(&[1, 3, 7], 7).unwrap(), 100.0);
        assert_eq!(median_rank(&[1, 3, 7]).unwrap(), 3.0);
        assert_eq!(median_rank(&[1, 2]).unwrap(), 1.5);
        assert_eq!(median_rank(&[2, 2, 2, 2]).unwrap(), 2.0);
        assert!((mean_rank(&[1, 3, 7]).unwrap() - 11.0 / 3.0).abs() < 1e-12);
        assert_eq!(mean_rank(&[4]).unwrap(), 4.0);
        assert_eq!(mean_rank(&[1, 1]).unwrap(), 1.0);
        assert!(recall_at_k(&[], 1).is_err());
        assert!(median_rank(&[]).is_err());
        assert!(mean_rank(&[0]).is_err());
    }

    #[test]
    fn perfect_alignment() {
        let vs: Vec<Embedding> = (0..5)
            .map(|i| {
                emb(&(0..5)
                    .map(|j| if i == j { 1.0 } else { 0.1 })
                    .collect::<Vec<_>>())
            })
            .collect();
        let (t2v, v2t) =
            evaluate_bidirectional(&vs, &vs, &[0, 1, 2, 3, 4], &EvalOptions::default()).unwrap();
        for r in [t2v, v2t] {
            assert_eq!(r.r_at[&1], 100.0);
            assert_eq!((r.mdr, r.mnr), (1.0, 1.0));
        }
    }

    #[test]
    fn multi_caption_policies() {
        let videos = vec![emb(&[1.0, 0.0]), emb(&[0.0, 1.0])];
        // Video 0 owns texts 0 and 2; text 2 points at video 1.
        let texts = vec![emb(&[1.0, 0.1]), emb(&[0.1, 1.0]), emb(&[0.2, 1.0])];
        let owner = [0, 1, 0];
        let best = EvalOptions::default();
        let (t2v, v2t) = evaluate_bidirectional(&videos, &texts, &owner, &best).unwrap();
        assert_eq!(t2v.n_queries, 3);
        assert_eq!(v2t.n_queries, 2);
        assert_eq!(v2t.r_at[&1], 100.0);
        let each = EvalOptions {
            policy: MultiCaptionPolicy::EachCaption,
            ..Default::default()
        };
        let (_, v2t) = evaluate_bidirectional(&videos, &texts, &owner, &each).unwrap();
        assert_eq!(v2t.n_queries, 3);
        assert!(v2t.r_at[&1] < 100.0);
        assert!(evaluate_bidirectional(&videos, &texts, &[0, 0, 0], &best).is_err());
    }

    #[test]
    fn text_cells_one_decimal() {
        let r = RetrievalReport::from_ranks(Direction::T2v, &[1, 2, 7], &DEFAULT_KS).unwrap();
        assert_eq!(r.table_cells(), ["33.3", "66.7", "100.0", "2.0", "3.3"]);
    }

    proptest! {
        #[test]
        fn recall_monotone_in_k(ranks in proptest::collection::vec(1usize..50, 1..40)) {
            let mut last = 0.0;
            for k in 1..=50 {
                let r = recall_at_k(&ranks, k).unwrap();
                prop_assert!(r >= last);
                last = r;
            }
            prop_assert_eq!(last, 100.0);
            let md = median_rank(&ranks).unwrap();
            let mn = mean_rank(&ranks).unwrap();
            prop_assert!(md >= 1.0 && mn >= 1.0);
        }

        #[test]
        fn metrics_ignore_query_order(mut ranks in proptest::collection::vec(1usize..30, 1..30), seed: u64) {
            let a = RetrievalReport::from_ranks(Direction::T2v, &ranks, &DEFAULT_KS).unwrap();
            use rand::seq::SliceRandom;
            ranks.shuffle(&mut crate::simple::seeded_rng(seed));
            let b = RetrievalReport::from_ranks(Direction::T2v, &ranks, &DEFAULT_KS).unwrap();
            prop_assert_eq!(a.r_at, b.r_at);
            prop_assert_eq!(a.mdr, b.mdr);
            prop_assert!((a.mnr - b.mnr).abs() < 1e-12);
        }
    }
}
