use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use walkdir::WalkDir;

use auglab::corpus::save_manifest;
use auglab::experiment::{
    evaluate_saved, export_views, run_experiment, sweep, train_and_save, write_report, DataSpec,
    ExperimentConfig, RunManifest,
};
use auglab::generative::mock;
use auglab::{Error, Result};

#[derive(Parser)]
#[command(
    name = "auglab",
    version,
    about = "Augmented video-text retrieval experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Defaults to the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the configured synthetic corpus as train/test manifests.
    Synth(Common),
    /// Generate views and export them under the run directory.
    Augment(Common),
    /// Train heads and save them with the loss trace.
    Train(Common),
    /// Evaluate heads saved by `train`.
    Eval(Common),
    /// Augment, train and evaluate.
    Run(Common),
    /// Run the configured grid and write a comparison table.
    Sweep(Common),
    /// Compare every run found under `--out` (or the given directories).
    Report {
        /// Only include runs of this config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Only include runs with this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        runs: Vec<PathBuf>,
    },
    #[command(hide = true)]
    MockBackend {
        #[arg(long)]
        work_dir: PathBuf,
        /// Reply in reverse order every N requests.
        #[arg(long, default_value_t = 0)]
        reorder: usize,
        /// Release held replies after this many idle milliseconds.
        #[arg(long, default_value_t = 25)]
        idle_ms: u64,
    },
}

fn load(c: &Common) -> Result<(ExperimentConfig, u64)> {
    let cfg = ExperimentConfig::load(&c.config)?;
    let seed = c.seed.unwrap_or(cfg.seed);
    Ok((cfg, seed))
}

fn synth(c: &Common) -> Result<()> {
    let (cfg, seed) = load(c)?;
    let DataSpec::Synth(spec) = &cfg.data else {
        return Err(Error::Config("synth needs a [data.synth] section".into()));
    };
    let (train, test) = spec.generate(seed)?;
    std::fs::create_dir_all(&c.out).map_err(|e| Error::io(&c.out, e))?;
    save_manifest(&train, &c.out.join("train.jsonl"))?;
    save_manifest(&test, &c.out.join("test.jsonl"))?;
    info!(
        "wrote {} train / {} test pairs to {}",
        train.len(),
        test.len(),
        c.out.display()
    );
    Ok(())
}

fn report(config: Option<&Path>, seed: Option<u64>, out: &Path, runs: &[PathBuf]) -> Result<()> {
    let digest = config
        .map(ExperimentConfig::load)
        .transpose()?
        .map(|c| c.digest());
    let roots = if runs.is_empty() {
        vec![out.to_path_buf()]
    } else {
        runs.to_vec()
    };
    let mut manifests = vec![];
    for root in &roots {
        for entry in WalkDir::new(root).sort_by_file_name() {
            let entry = entry.map_err(|e| Error::invalid(format!("{}: {e}", root.display())))?;
            if entry.file_name() != "run_manifest.json" {
                continue;
            }
            let m = RunManifest::load(entry.path())?;
            if digest.as_ref().is_some_and(|d| *d != m.config_digest)
                || seed.is_some_and(|s| s != m.seed)
            {
                continue;
            }
            manifests.push(m);
        }
    }
    if manifests.is_empty() {
        return Err(Error::invalid(format!(
            "no run manifests found under {roots:?}"
        )));
    }
    // One table per dataset; runs over different data are not comparable.
    let mut by_dataset: BTreeMap<String, Vec<RunManifest>> = BTreeMap::new();
    for m in manifests.iter().cloned() {
        by_dataset
            .entry(m.dataset_digest.clone())
            .or_default()
            .push(m);
    }
    let tables = by_dataset
        .values()
        .map(|ms| write_report(ms))
        .collect::<Result<Vec<_>>>()?;
    let text = tables
        .iter()
        .map(|t| t.to_text())
        .collect::<Vec<_>>()
        .join("\n");
    let json = serde_json::to_string_pretty(&tables).expect("reports serialize") + "\n";
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (name, body) in [("comparison.txt", text), ("comparison.json", json)] {
        let p = out.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    if tables.len() > 1 {
        info!("runs span {} datasets; wrote one table each", tables.len());
    }
    info!("compared {} runs in {}", manifests.len(), out.display());
    Ok(())
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Synth(c) => synth(&c),
        Cmd::Augment(c) => {
            let (cfg, seed) = load(&c)?;
            let dir = export_views(&cfg, seed, &c.out)?;
            info!("views in {}", dir.display());
            Ok(())
        }
        Cmd::Train(c) => {
            let (cfg, seed) = load(&c)?;
            let dir = train_and_save(&cfg, seed, &c.out)?;
            info!("heads in {}", dir.display());
            Ok(())
        }
        Cmd::Eval(c) => {
            let (cfg, seed) = load(&c)?;
            evaluate_saved(&cfg, seed, &c.out).map(drop)
        }
        Cmd::Run(c) => {
            let (cfg, seed) = load(&c)?;
            run_experiment(&cfg, seed, &c.out).map(drop)
        }
        Cmd::Sweep(c) => {
            let (cfg, seed) = load(&c)?;
            sweep(&cfg, seed, &c.out).map(drop)
        }
        Cmd::Report {
            config,
            seed,
            out,
            runs,
        } => report(config.as_deref(), seed, &out, &runs),
        Cmd::MockBackend {
            work_dir,
            reorder,
            idle_ms,
        } => {
            let stdin = std::io::BufReader::new(std::io::stdin());
            let idle = Some(std::time::Duration::from_millis(idle_ms));
            mock::serve(stdin, std::io::stdout().lock(), &work_dir, reorder, idle)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
