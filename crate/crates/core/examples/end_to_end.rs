//! One full run: synthetic data, RE views from the mock backend, training,
//! evaluation and artifacts on disk.
//!
//! Run with `cargo run --release --example end_to_end [out_dir]`.

use std::path::PathBuf;

use auglab::experiment::{run_experiment, DataSpec, ExperimentConfig, Strategy, SynthSpec};

fn main() -> auglab::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("auglab-end-to-end"));
    let mut cfg = ExperimentConfig::from_toml(
        r#"
        name = "re-k1"
        [augment]
        strategy = "re"
        k_text = 1
        k_video = 1
        backend = ["mock"]
        [train]
        epochs = 20
        "#,
    )?;
    cfg.data = DataSpec::Synth(SynthSpec {
        n_pairs: 256,
        noise: 0.2,
        ..SynthSpec::default()
    });
    cfg.runtime.cache_dir = out.join("cache");
    debug_assert_eq!(cfg.augment.strategy, Strategy::Re);

    let manifest = run_experiment(&cfg, 0, &out)?;
    let dir = cfg.run_dir(&out, 0);
    println!(
        "{}",
        std::fs::read_to_string(dir.join("report.txt")).expect("report written")
    );
    for (role, file) in &manifest.artifacts {
        println!("{role:16} {}", dir.join(file).display());
    }
    Ok(())
}
