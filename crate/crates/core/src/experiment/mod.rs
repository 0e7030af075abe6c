//! Experiment configuration and orchestration.
//!
//! A run is fully determined by an [`ExperimentConfig`] and a seed. Artifacts
//! land in `<out>/<config digest>/<seed>/`.

mod pipeline;
mod report;
mod synth;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::hashing::sha256_hex;
use crate::retrieve::{MultiCaptionPolicy, DEFAULT_KS};
use crate::train::TrainConfig;
use crate::views::{Composition, DEFAULT_MAX_TOKENS};
use crate::{Error, Result};

pub use pipeline::{
    augment_corpus, compose, evaluate, evaluate_saved, export_views, load_data, load_run_heads,
    prepare, run_experiment, run_training, sweep, train_and_save, AugmentedCorpus, AugmentedSample,
    Evaluation, Prepared, RunManifest, ARTIFACT_NAMES,
};
pub use report::{write_report, ComparisonReport, ComparisonRow};
pub use synth::{synth_corpus, SynthSpec};

pub const MAX_TEXT_VIEWS: usize = 5;
pub const MAX_VIDEO_VIEWS: usize = 3;
pub const CACHE_DIR_ENV: &str = "AUGLAB_CACHE_DIR";
pub const BACKEND_ENV: &str = "AUGLAB_BACKEND";
/// Backend command selecting the in-process mock.
pub const MOCK_BACKEND: &str = "mock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Synth(SynthSpec),
    Manifests { train: PathBuf, test: PathBuf },
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec::Synth(SynthSpec::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    None,
    Sa,
    Tpvs,
    Re,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Sa => "sa",
            Strategy::Tpvs => "tpvs",
            Strategy::Re => "re",
        }
    }

    pub fn is_generative(self) -> bool {
        matches!(self, Strategy::Tpvs | Strategy::Re)
    }
}

/// Which captions of a multi-caption training sample become training pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainCaptions {
    #[default]
    Primary,
    EachCaption,
    /// All captions joined into one paragraph.
    Paragraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentPlan {
    pub strategy: Strategy,
    pub k_text: usize,
    pub k_video: usize,
    pub composition: Composition,
    /// Also build views for the test split.
    pub test_time: bool,
    pub max_tokens: usize,
    /// Defaults to `n_sample_frames * (1 + k_video)`.
    pub max_frames: Option<usize>,
    pub styles: Vec<String>,
    /// Output lengths for SA; default to the input lengths.
    pub sa_frames: Option<usize>,
    pub sa_words: Option<usize>,
    /// Backend command line, or `["mock"]` for the in-process mock.
    pub backend: Option<Vec<String>>,
}

impl Default for AugmentPlan {
    fn default() -> Self {
        Self {
            strategy: Strategy::None,
            k_text: 1,
            k_video: 1,
            composition: Composition::Concat,
            test_time: true,
            max_tokens: DEFAULT_MAX_TOKENS,
            max_frames: None,
            styles: crate::generative::DEFAULT_STYLES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            sa_frames: None,
            sa_words: None,
            backend: None,
        }
    }
}

impl AugmentPlan {
    /// Text and video view counts actually produced.
    pub fn view_counts(&self) -> (usize, usize) {
        match self.strategy {
            Strategy::None => (0, 0),
            _ => (self.k_text, self.k_video),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSpec {
    /// Hashed bag-of-tokens width.
    pub text_dim_in: usize,
    pub dim_out: usize,
    pub bias: bool,
    pub hash_seed: u64,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self {
            text_dim_in: 512,
            dim_out: 32,
            bias: false,
            hash_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    pub ks: Vec<usize>,
    pub policy: MultiCaptionPolicy,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            ks: DEFAULT_KS.to_vec(),
            policy: MultiCaptionPolicy::default(),
        }
    }
}

/// Axes of a sweep. Empty `strategies` means the plan's own strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub strategies: Vec<Strategy>,
    pub k_text: Vec<usize>,
    pub k_video: Vec<usize>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            strategies: vec![],
            k_text: (0..=MAX_TEXT_VIEWS).collect(),
            k_video: (0..=MAX_VIDEO_VIEWS).collect(),
        }
    }
}

/// Settings that change how a run executes but not what it computes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeSpec {
    pub cache_dir: PathBuf,
    pub eval_threads: usize,
    pub backend_timeout_secs: u64,
}

impl Default for RuntimeSpec {
    fn default() -> Self {
        Self {
            cache_dir: PathBuf::from(".auglab-cache"),
            eval_threads: 1,
            backend_timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Used when no seed is given on the command line.
    pub seed: u64,
    pub n_sample_frames: usize,
    pub train_captions: TrainCaptions,
    pub data: DataSpec,
    pub augment: AugmentPlan,
    pub encoder: EncoderSpec,
    /// `train.seed` is replaced by the run seed.
    pub train: TrainConfig,
    pub eval: EvalSpec,
    pub sweep: SweepSpec,
    pub runtime: RuntimeSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            seed: 0,
            n_sample_frames: 12,
            train_captions: TrainCaptions::default(),
            data: DataSpec::default(),
            augment: AugmentPlan::default(),
            encoder: EncoderSpec::default(),
            train: TrainConfig::default(),
            eval: EvalSpec::default(),
            sweep: SweepSpec::default(),
            runtime: RuntimeSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses, resolves manifest paths against the file's directory, applies
    /// environment overrides and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let DataSpec::Manifests { train, test } = &mut cfg.data {
            for p in [train, test] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.apply_env();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty()) {
            self.runtime.cache_dir = PathBuf::from(dir);
        }
        if let Ok(cmd) = std::env::var(BACKEND_ENV) {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if !argv.is_empty() {
                self.augment.backend = Some(argv);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.name.trim().is_empty() {
            return bad("name must not be empty".into());
        }
        if self.n_sample_frames == 0 {
            return bad("n_sample_frames must be >= 1".into());
        }
        let a = &self.augment;
        if a.k_text > MAX_TEXT_VIEWS || a.k_video > MAX_VIDEO_VIEWS {
            return bad(format!(
                "k_text must be <= {MAX_TEXT_VIEWS} and k_video <= {MAX_VIDEO_VIEWS}, got {} and {}",
                a.k_text, a.k_video
            ));
        }
        if a.max_tokens == 0 || a.max_frames == Some(0) {
            return bad("max_tokens and max_frames must be >= 1".into());
        }
        if a.sa_frames == Some(0) || a.sa_words == Some(0) {
            return bad("sa_frames and sa_words must be >= 1".into());
        }
        if a.strategy.is_generative() && a.view_counts() != (0, 0) {
            match &a.backend {
                None => {
                    return bad(format!(
                        "strategy {} needs a backend command (augment.backend or {BACKEND_ENV})",
                        a.strategy.name()
                    ))
                }
                Some(argv) if argv.is_empty() || argv[0].is_empty() => {
                    return bad("empty backend command".into())
                }
                _ => {}
            }
        }
        if a.strategy == Strategy::Tpvs && a.k_video > 0 {
            if a.styles.is_empty() {
                return bad("tpvs video views need at least one style".into());
            }
            let mut seen = std::collections::HashSet::new();
            if let Some(s) = a
                .styles
                .iter()
                .find(|s| s.is_empty() || !seen.insert(s.as_str()))
            {
                return bad(format!("style {s:?} is empty or repeated"));
            }
        }
        if self.encoder.text_dim_in < 2 || self.encoder.dim_out == 0 {
            return bad("encoder needs text_dim_in >= 2 and dim_out >= 1".into());
        }
        self.train.validate()?;
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return bad("eval.ks must be non-empty and >= 1".into());
        }
        if self.sweep.k_text.iter().any(|&k| k > MAX_TEXT_VIEWS)
            || self.sweep.k_video.iter().any(|&k| k > MAX_VIDEO_VIEWS)
        {
            return bad("sweep view counts exceed the K bounds".into());
        }
        match &self.data {
            DataSpec::Synth(s) => {
                s.validate()?;
                if self.train.batch_size > s.n_pairs {
                    return bad(format!(
                        "batch_size {} exceeds the {} training pairs",
                        self.train.batch_size, s.n_pairs
                    ));
                }
            }
            DataSpec::Manifests { train, test } => {
                for p in [train, test] {
                    if !p.is_file() {
                        return bad(format!("manifest {} not found", p.display()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Canonical JSON of everything that affects results. Runtime settings,
    /// sweep axes and seeds are excluded.
    pub fn canonical_value(&self) -> serde_json::Value {
        let mut view = self.clone();
        view.seed = 0;
        view.train.seed = 0;
        view.runtime = RuntimeSpec::default();
        view.sweep = SweepSpec::default();
        serde_json::to_value(&view).expect("config serializes")
    }

    pub fn digest(&self) -> String {
        digest_value(&self.canonical_value())
    }

    pub fn run_dir(&self, out: &Path, seed: u64) -> PathBuf {
        out.join(self.digest()).join(seed.to_string())
    }
}

/// SHA-256 of the compact serialization; object keys are sorted.
pub fn digest_value(v: &serde_json::Value) -> String {
    sha256_hex(
        serde_json::to_string(v)
            .expect("value serializes")
            .as_bytes(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            name = "sa-1-1"
            [data.synth]
            n_pairs = 64
            noise = 0.3
            [augment]
            strategy = "sa"
            composition = "mean-of-view-embeddings"
            [train]
            epochs = 2
            "#,
        )
        .unwrap();
        assert_eq!(cfg.augment.strategy, Strategy::Sa);
        assert_eq!(cfg.augment.composition, Composition::MeanOfViewEmbeddings);
        assert_eq!(cfg.train.epochs, 2);
        assert_eq!(cfg.train.weight_decay, 0.2);
        match &cfg.data {
            DataSpec::Synth(s) => assert_eq!((s.n_pairs, s.noise, s.d_frame), (64, 0.3, 16)),
            _ => panic!("expected synth"),
        }
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_toml(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let e = ExperimentConfig::from_toml("nmae = \"x\"").unwrap_err();
        assert!(e.is_config());
        assert!(ExperimentConfig::from_toml("[augment]\nstrategy = \"bogus\"").is_err());
    }

    #[test]
    fn digest_ignores_runtime_and_seed() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.seed = 7;
        b.runtime.eval_threads = 8;
        b.runtime.cache_dir = "/elsewhere".into();
        b.sweep.k_text = vec![1];
        assert_eq!(a.digest(), b.digest());
        b.augment.k_text = 2;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn validation_failures() {
        let check = |f: &dyn Fn(&mut ExperimentConfig)| {
            let mut c = ExperimentConfig::default();
            f(&mut c);
            let e = c.validate().unwrap_err();
            assert!(e.is_config(), "{e}");
        };
        check(&|c| c.augment.k_text = 6);
        check(&|c| c.augment.k_video = 4);
        check(&|c| c.augment.strategy = Strategy::Tpvs);
        check(&|c| c.augment.strategy = Strategy::Re);
        check(&|c| {
            c.augment.strategy = Strategy::Tpvs;
            c.augment.backend = Some(vec!["mock".into()]);
            c.augment.styles = vec!["a".into(), "a".into()];
        });
        check(&|c| {
            c.data = DataSpec::Synth(SynthSpec {
                n_pairs: 4,
                ..Default::default()
            });
            c.train.batch_size = 8;
        });
        check(&|c| {
            c.data = DataSpec::Manifests {
                train: "/nonexistent/train.jsonl".into(),
                test: "/nonexistent/test.jsonl".into(),
            }
        });
        check(&|c| c.train.base_lr = -1.0);
        check(&|c| c.eval.ks = vec![]);
        check(&|c| c.encoder.text_dim_in = 1);

        let mut ok = ExperimentConfig::default();
        ok.augment.strategy = Strategy::Tpvs;
        ok.augment.k_text = 0;
        ok.augment.k_video = 0;
        ok.validate().unwrap();
    }
}
