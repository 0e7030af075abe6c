//! Train projection heads on a synthetic corpus and watch the loss fall.
//!
//! Run with `cargo run --release --example contrastive_training`.

use auglab::experiment::{evaluate, prepare, run_training, DataSpec, ExperimentConfig, SynthSpec};

fn main() -> auglab::Result<()> {
    let mut cfg = ExperimentConfig {
        data: DataSpec::Synth(SynthSpec {
            n_pairs: 512,
            noise: 0.1,
            ..SynthSpec::default()
        }),
        ..ExperimentConfig::default()
    };
    cfg.train.epochs = 10;
    let seed = 1;

    let prepared = prepare(&cfg, seed)?;
    let (heads, trace) = run_training(&cfg, seed, &prepared)?;
    for r in trace.iter().step_by(16) {
        println!("step {:4}  lr {:.2e}  loss {:.4}", r.step, r.lr, r.loss);
    }
    let eval = evaluate(&cfg, &prepared, &heads)?;
    for report in [&eval.t2v, &eval.v2t] {
        println!(
            "{}: {:?} MdR {} MnR {:.1}",
            report.direction, report.r_at, report.mdr, report.mnr
        );
    }
    println!(
        "random R@1 would be {:.3}",
        100.0 / prepared.test_ids.len() as f64
    );
    Ok(())
}
