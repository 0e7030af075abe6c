//! Order-preserving resampling of captions and frame sequences.
//!
//! Run with `cargo run --example simple_augmentation`.

use std::collections::BTreeMap;

use auglab::corpus::{tokenize, Video};
use auglab::simple::{seeded_rng, simple_augment_text, simple_augment_video, SaConfig};

fn main() -> auglab::Result<()> {
    let caption = tokenize("a man slices an onion in a small kitchen")?;
    let cfg = SaConfig::default();
    let mut rng = seeded_rng(7);
    for _ in 0..3 {
        println!(
            "{}",
            simple_augment_text(&caption, &cfg, &mut rng)?.source()
        );
    }

    // Two one-dimensional frames; every view is one of [0,0], [0,1], [1,1].
    let video = Video::new("v", vec![vec![0.0], vec![1.0]])?;
    let mut counts = BTreeMap::new();
    let n = 10_000;
    for _ in 0..n {
        let view = simple_augment_video(&video, &cfg, &mut rng)?;
        let key: Vec<u8> = view.frames().map(|f| f[0] as u8).collect();
        *counts.entry(key).or_insert(0usize) += 1;
    }
    for (outcome, c) in counts {
        println!("{outcome:?}: {:.3}", c as f64 / n as f64);
    }

    // Shorter views drop more, longer views duplicate more.
    let short = SaConfig {
        n_out_words: Some(4),
        ..SaConfig::default()
    };
    println!(
        "{}",
        simple_augment_text(&caption, &short, &mut rng)?.source()
    );
    Ok(())
}
