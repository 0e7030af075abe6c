//! A small grid over strategies and view counts, compared in one table.
//!
//! Run with `cargo run --release --example ablation_sweep [out_dir]`.

use std::path::PathBuf;

use auglab::experiment::{sweep, ExperimentConfig};

fn main() -> auglab::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("auglab-sweep"));
    let mut cfg = ExperimentConfig::from_toml(
        r#"
        name = "grid"
        [data.synth]
        n_pairs = 128
        noise = 0.2
        [augment]
        backend = ["mock"]
        [train]
        epochs = 20
        [sweep]
        strategies = ["none", "sa", "tpvs", "re"]
        k_text = [0, 2]
        k_video = [0, 1]
        "#,
    )?;
    cfg.runtime.cache_dir = out.join("cache");
    let runs = sweep(&cfg, 0, &out)?;
    println!("{} runs", runs.len());
    print!(
        "{}",
        std::fs::read_to_string(out.join("sweep_report.txt")).expect("report written")
    );
    Ok(())
}
