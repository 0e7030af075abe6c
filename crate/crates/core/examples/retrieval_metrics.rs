//! Ranks, tie handling and the recall / median / mean rank metrics.
//!
//! Run with `cargo run --example retrieval_metrics`.

use auglab::encode::Embedding;
use auglab::retrieve::{
    evaluate_bidirectional, mean_rank, median_rank, rank_in_scores, recall_at_k, EvalOptions,
    RetrievalReport,
};
use ndarray::Array1;

fn emb(v: &[f64]) -> auglab::Result<Embedding> {
    Embedding::from_unnormalized(Array1::from(v.to_vec()), "example")
}

fn main() -> auglab::Result<()> {
    // The target at index 1 ties with index 0, so it ranks second.
    println!("tied rank: {}", rank_in_scores(&[0.5, 0.5, 0.1], 1));

    let ranks = [1, 3, 7, 2];
    println!(
        "R@1 {:.1}  R@5 {:.1}  MdR {}  MnR {}",
        recall_at_k(&ranks, 1)?,
        recall_at_k(&ranks, 5)?,
        median_rank(&ranks)?,
        mean_rank(&ranks)?
    );

    let videos = vec![
        emb(&[1.0, 0.0, 0.0])?,
        emb(&[0.0, 1.0, 0.0])?,
        emb(&[0.0, 0.0, 1.0])?,
    ];
    let texts = vec![
        emb(&[0.9, 0.1, 0.0])?,
        emb(&[0.0, 0.2, 1.0])?,
        emb(&[0.1, 0.0, 0.9])?,
    ];
    let (t2v, v2t) = evaluate_bidirectional(&videos, &texts, &[0, 1, 2], &EvalOptions::default())?;
    for r in [&t2v, &v2t] {
        println!("{}: {}", r.direction, r.table_cells().join("  "));
    }
    let json = serde_json::to_string(&RetrievalReport::from_ranks(
        t2v.direction,
        &ranks,
        &[1, 5],
    )?)
    .expect("report serializes");
    println!("{json}");
    Ok(())
}
