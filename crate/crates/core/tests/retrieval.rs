use auglab::encode::Embedding;
use auglab::retrieve::{
    evaluate_bidirectional, mean_rank, rank_in_scores, recall_at_k, EvalOptions, MultiCaptionPolicy,
};
use auglab::simple::seeded_rng;
use ndarray::Array1;
use proptest::prelude::*;
use rand::Rng;

fn random_unit(rng: &mut auglab::simple::SeededRng, d: usize) -> Embedding {
    Embedding::from_unnormalized(
        Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0)),
        "random",
    )
    .unwrap()
}

#[test]
fn random_embeddings_have_mean_rank_near_half_gallery() {
    // Uniformly random ranks over 64 candidates have mean 32.5.
    let n = 64;
    let opts = EvalOptions::default();
    let mut total = 0.0;
    for seed in 0..100 {
        let mut rng = seeded_rng(seed);
        let videos: Vec<_> = (0..n).map(|_| random_unit(&mut rng, 16)).collect();
        let texts: Vec<_> = (0..n).map(|_| random_unit(&mut rng, 16)).collect();
        let owner: Vec<usize> = (0..n).collect();
        let (t2v, _) = evaluate_bidirectional(&videos, &texts, &owner, &opts).unwrap();
        total += t2v.mnr;
    }
    let mean = total / 100.0;
    assert!((mean - 32.5).abs() <= 3.0, "mean MnR {mean}");
}

fn ranks_after(scores: &[f64], f: impl Fn(f64) -> f64) -> Vec<usize> {
    let mapped: Vec<f64> = scores.iter().map(|&s| f(s)).collect();
    (0..scores.len())
        .map(|t| rank_in_scores(&mapped, t))
        .collect()
}

proptest! {
    #[test]
    fn increasing_transforms_keep_ranks(
        scores in proptest::collection::vec((-20i32..20).prop_map(|x| f64::from(x) / 8.0), 1..64)
    ) {
        let base = ranks_after(&scores, |x| x);
        prop_assert_eq!(&ranks_after(&scores, |x| 2.0 * x + 1.0), &base);
        prop_assert_eq!(&ranks_after(&scores, |x| x * x * x), &base);
        for k in [1, 5, 10] {
            prop_assert_eq!(recall_at_k(&base, k).unwrap(), recall_at_k(&ranks_after(&scores, |x| x.powi(3)), k).unwrap());
        }
    }

    #[test]
    fn recall_at_gallery_size_is_complete(n in 1usize..40, seed: u64) {
        let mut rng = seeded_rng(seed);
        let videos: Vec<_> = (0..n).map(|_| random_unit(&mut rng, 4)).collect();
        let texts: Vec<_> = (0..n).map(|_| random_unit(&mut rng, 4)).collect();
        let owner: Vec<usize> = (0..n).collect();
        let opts = EvalOptions { ks: vec![1, n], ..EvalOptions::default() };
        let (t2v, v2t) = evaluate_bidirectional(&videos, &texts, &owner, &opts).unwrap();
        prop_assert_eq!(t2v.r_at[&n], 100.0);
        prop_assert_eq!(v2t.r_at[&n], 100.0);
        prop_assert!(t2v.r_at[&1] <= t2v.r_at[&n]);
        prop_assert!(t2v.mnr >= 1.0 && t2v.mnr <= n as f64);
    }
}

#[test]
fn thread_count_does_not_change_reports() {
    let mut rng = seeded_rng(77);
    let videos: Vec<_> = (0..50).map(|_| random_unit(&mut rng, 6)).collect();
    // Two captions per video, interleaved.
    let texts: Vec<_> = (0..100).map(|_| random_unit(&mut rng, 6)).collect();
    let owner: Vec<usize> = (0..100).map(|i| i / 2).collect();
    for policy in [
        MultiCaptionPolicy::BestRanked,
        MultiCaptionPolicy::EachCaption,
    ] {
        let serial = EvalOptions {
            policy,
            ..EvalOptions::default()
        };
        let parallel = EvalOptions {
            threads: 4,
            ..serial.clone()
        };
        assert_eq!(
            evaluate_bidirectional(&videos, &texts, &owner, &serial).unwrap(),
            evaluate_bidirectional(&videos, &texts, &owner, &parallel).unwrap()
        );
    }
    let (t2v, v2t) =
        evaluate_bidirectional(&videos, &texts, &owner, &EvalOptions::default()).unwrap();
    assert_eq!(t2v.n_queries, 100);
    assert_eq!(v2t.n_queries, 50);
}

#[test]
fn rank_errors() {
    assert!(mean_rank(&[]).is_err());
    assert!(recall_at_k(&[0], 1).is_err());
    let e = Embedding::from_unnormalized(Array1::from(vec![1.0, 0.0]), "e").unwrap();
    assert!(evaluate_bidirectional(
        std::slice::from_ref(&e),
        std::slice::from_ref(&e),
        &[1],
        &EvalOptions::default()
    )
    .is_err());
    assert!(evaluate_bidirectional(&[], &[e], &[0], &EvalOptions::default()).is_err());
}
