use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_auglab");

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn config(&self, name: &str, body: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn auglab(&self, args: &[&str]) -> Output {
        Command::new(BIN)
            .args(args)
            .env_remove("AUGLAB_BACKEND")
            .env("AUGLAB_CACHE_DIR", self.path("cache"))
            .env("RUST_LOG", "info")
            .output()
            .unwrap()
    }

    fn run(&self, cmd: &str, config: &Path, out: &str, seed: u64) -> Output {
        self.auglab(&[
            cmd,
            "--config",
            config.to_str().unwrap(),
            "--seed",
            &seed.to_string(),
            "--out",
            self.path(out).to_str().unwrap(),
        ])
    }
}

const SMALL: &str = "name = \"small\"\n[data.synth]\nn_pairs = 48\nnoise = 0.1\n[train]\nepochs = 2\nbatch_size = 16\n";

fn single_run_dir(out: &Path) -> PathBuf {
    let digest = std::fs::read_dir(out)
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    std::fs::read_dir(digest)
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path()
}

#[test]
fn invalid_configs_exit_2_without_output() {
    let ws = Workspace::new();
    let cases = [
        ("typo.toml", "nmae = \"x\"\n"),
        ("k.toml", "[augment]\nstrategy = \"sa\"\nk_text = 9\n"),
        ("backend.toml", "[augment]\nstrategy = \"tpvs\"\n"),
        (
            "batch.toml",
            "[data.synth]\nn_pairs = 8\n[train]\nbatch_size = 32\n",
        ),
        (
            "missing.toml",
            "[data.manifests]\ntrain = \"nope.jsonl\"\ntest = \"nope2.jsonl\"\n",
        ),
    ];
    for (name, body) in cases {
        let cfg = ws.config(name, body);
        let out = ws.run("run", &cfg, "out", 0);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(String::from_utf8_lossy(&out.stderr).contains("configuration error"));
        assert!(!ws.path("out").exists(), "{name} left output behind");
    }
    let out = ws.run("run", &ws.path("absent.toml"), "out", 0);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_1() {
    let ws = Workspace::new();
    let cfg = ws.config(
        "gen.toml",
        &format!("{SMALL}[augment]\nstrategy = \"tpvs\"\nbackend = [\"/nonexistent/generator\"]\n"),
    );
    let out = ws.run("run", &cfg, "out", 0);
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // Evaluating before training has nothing to load.
    let cfg = ws.config("small.toml", SMALL);
    assert_eq!(ws.run("eval", &cfg, "fresh", 0).status.code(), Some(1));
}

#[test]
fn run_writes_the_artifact_set() {
    let ws = Workspace::new();
    let cfg = ws.config("small.toml", SMALL);
    let out = ws.run("run", &cfg, "out", 5);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stdout.is_empty(), "logs belong on stderr");
    let dir = single_run_dir(&ws.path("out"));
    assert_eq!(dir.file_name().unwrap(), "5");
    for name in auglab::experiment::ARTIFACT_NAMES {
        assert!(dir.join(name).is_file(), "missing {name}");
    }
    let report: Value =
        serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap();
    assert!(report["t2v"]["r_at"]["1"].is_number(), "{report}");
    let text = std::fs::read_to_string(dir.join("report.txt")).unwrap();
    assert!(text.contains("Text-to-Video") && text.contains("Video-to-Text"));
    let trace = std::fs::read_to_string(dir.join("loss_trace.jsonl")).unwrap();
    // 48 pairs in batches of 16, two epochs.
    assert_eq!(trace.lines().count(), 6);
    let manifest = auglab::experiment::RunManifest::load(&dir.join("run_manifest.json")).unwrap();
    assert_eq!(manifest.seed, 5);
}

#[test]
fn train_then_eval_equals_run() {
    let ws = Workspace::new();
    let cfg = ws.config(
        "small.toml",
        &format!("{SMALL}[augment]\nstrategy = \"sa\"\nk_text = 2\nk_video = 1\n"),
    );
    assert!(ws.run("run", &cfg, "whole", 3).status.success());
    assert!(ws.run("train", &cfg, "split", 3).status.success());
    assert!(ws.run("eval", &cfg, "split", 3).status.success());
    let (a, b) = (
        single_run_dir(&ws.path("whole")),
        single_run_dir(&ws.path("split")),
    );
    for name in [
        "report.json",
        "report.txt",
        "video_head.vtrh",
        "text_head.vtrh",
        "loss_trace.jsonl",
        "video.vtre",
    ] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn synth_manifests_feed_a_run() {
    let ws = Workspace::new();
    let cfg = ws.config("small.toml", SMALL);
    let out = ws.run("synth", &cfg, "data", 11);
    assert!(out.status.success());
    assert!(ws.path("data/train.jsonl").is_file() && ws.path("data/test.jsonl").is_file());
    // Relative paths resolve against the config file.
    let manifest_cfg = ws.config(
        "from_files.toml",
        "name = \"files\"\n[data.manifests]\ntrain = \"data/train.jsonl\"\ntest = \"data/test.jsonl\"\n[train]\nepochs = 1\nbatch_size = 16\n",
    );
    let out = ws.run("run", &manifest_cfg, "out", 11);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn augment_exports_views() {
    let ws = Workspace::new();
    let cfg = ws.config(
        "re.toml",
        &format!(
            "{SMALL}[augment]\nstrategy = \"re\"\nk_text = 2\nk_video = 1\nbackend = [\"mock\"]\n"
        ),
    );
    assert!(ws.run("augment", &cfg, "out", 1).status.success());
    let views = single_run_dir(&ws.path("out")).join("views");
    let train = std::fs::read_to_string(views.join("views_train.jsonl")).unwrap();
    assert_eq!(train.lines().count(), 48);
    let first: Value = serde_json::from_str(train.lines().next().unwrap()).unwrap();
    assert_eq!(first["id"], "train00000");
    assert_eq!(first["captions"][0]["views"].as_array().unwrap().len(), 2);
    let frames = first["video_views"][0].as_str().unwrap();
    let video = auglab::corpus::read_frames(&views.join(frames), "v").unwrap();
    assert_eq!(video.n_frames(), 12);
    // Cached generations make a second pass free of new cache entries.
    let count = || walkdir::WalkDir::new(ws.path("cache")).into_iter().count();
    let before = count();
    assert!(ws.run("augment", &cfg, "again", 1).status.success());
    assert_eq!(count(), before);
}

#[test]
fn report_and_sweep_compare_runs() {
    let ws = Workspace::new();
    let cfg = ws.config("small.toml", SMALL);
    for seed in [1, 2] {
        assert!(ws.run("run", &cfg, "runs", seed).status.success());
    }
    let out = ws.auglab(&["report", "--out", ws.path("runs").to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    // Synthetic data follows the run seed, so two seeds give two tables.
    let json: Value =
        serde_json::from_slice(&std::fs::read(ws.path("runs/comparison.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 2);
    let table = std::fs::read_to_string(ws.path("runs/comparison.txt")).unwrap();
    assert!(table.contains("small (seed 1)") && table.contains("small (seed 2)"));
    let filtered = ws.auglab(&[
        "report",
        "--seed",
        "2",
        "--out",
        ws.path("runs").to_str().unwrap(),
    ]);
    assert!(filtered.status.success());
    let json: Value =
        serde_json::from_slice(&std::fs::read(ws.path("runs/comparison.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 1);

    // Pinning the corpus seed puts both seeds in one table.
    let pinned = ws.config(
        "pinned.toml",
        &SMALL.replace("noise = 0.1", "noise = 0.1\nseed = 99"),
    );
    for seed in [1, 2] {
        assert!(ws.run("run", &pinned, "pinned", seed).status.success());
    }
    let out = ws.auglab(&[
        "report",
        "--config",
        pinned.to_str().unwrap(),
        "--out",
        ws.path("pinned").to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json: Value =
        serde_json::from_slice(&std::fs::read(ws.path("pinned/comparison.json")).unwrap()).unwrap();
    assert_eq!(json[0]["rows"].as_array().unwrap().len(), 2);
    assert!(std::fs::read_to_string(ws.path("pinned/comparison.txt"))
        .unwrap()
        .contains('*'));

    assert_eq!(
        ws.auglab(&["report", "--out", ws.path("empty").to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );

    let sweep = ws.config(
        "sweep.toml",
        &format!(
            "{SMALL}[sweep]\nstrategies = [\"none\", \"sa\"]\nk_text = [1, 2]\nk_video = [0]\n"
        ),
    );
    let out = ws.run("sweep", &sweep, "grid", 4);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json: Value =
        serde_json::from_slice(&std::fs::read(ws.path("grid/sweep_report.json")).unwrap()).unwrap();
    // "none" runs once, "sa" once per text count.
    assert_eq!(json["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn help_and_unknown_subcommands() {
    let ws = Workspace::new();
    assert!(ws.auglab(&["--help"]).status.success());
    assert_eq!(ws.auglab(&["frobnicate"]).status.code(), Some(2));
}
