use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use log::info;
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::report::write_report;
use super::{
    digest_value, AugmentPlan, DataSpec, ExperimentConfig, Strategy, TrainCaptions, MOCK_BACKEND,
};
use crate::corpus::{
    check_disjoint, concat_captions, load_manifest, uniform_sample_frames, write_frames,
    DatasetSplit, PairedSample, SplitName, Text, Video,
};
use crate::encode::{
    read_head, video_features, write_embeddings, write_head, Embedding, ProjectionHead,
    TextFeaturizer,
};
use crate::generative::mock::MockBackend;
use crate::generative::protocol::SubprocessBackend;
use crate::generative::{AugMode, Backend, Cache, Generator};
use crate::hashing::{sample_seed, Hash64};
use crate::retrieve::{evaluate_bidirectional, EvalOptions, RetrievalReport};
use crate::simple::{seeded_rng, simple_augment_text, simple_augment_video, SaConfig};
use crate::train::{embed_views, train_run, write_trace, Heads, TraceRecord, TrainingItem};
use crate::views::{compose_text, compose_video, Composition, ViewBundle};
use crate::{Error, Result};

/// Artifact file names inside a run directory.
pub const ARTIFACT_NAMES: [&str; 7] = [
    "video_head.vtrh",
    "text_head.vtrh",
    "loss_trace.jsonl",
    "video.vtre",
    "text.vtre",
    "report.json",
    "report.txt",
];
const MANIFEST_NAME: &str = "run_manifest.json";

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage {
            stage: name,
            source: Box::new(e),
        },
    })
}

fn dataset_digest(train: &DatasetSplit, test: &DatasetSplit) -> String {
    let mut h = Sha256::new();
    for split in [train, test] {
        h.update((split.len() as u64).to_le_bytes());
        for s in &split.samples {
            for field in std::iter::once(s.id.as_str()).chain(s.all_captions().map(Text::source)) {
                h.update((field.len() as u64).to_le_bytes());
                h.update(field.as_bytes());
            }
            h.update((s.video.n_frames() as u64).to_le_bytes());
            h.update((s.video.dim() as u64).to_le_bytes());
            for x in s.video.as_flat() {
                h.update(x.to_le_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

/// Loads or generates both splits, resamples every video to
/// `n_sample_frames` uniformly spaced frames, and digests the result.
pub fn load_data(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(DatasetSplit, DatasetSplit, String)> {
    let (train, test) = match &cfg.data {
        DataSpec::Synth(spec) => spec.generate(seed)?,
        DataSpec::Manifests { train, test } => (
            load_manifest(train, SplitName::Train)?,
            load_manifest(test, SplitName::Test)?,
        ),
    };
    check_disjoint(&train, &test)?;
    let resample = |split: DatasetSplit| -> Result<DatasetSplit> {
        let samples = split
            .samples
            .into_iter()
            .map(|s| {
                Ok(PairedSample {
                    video: uniform_sample_frames(&s.video, cfg.n_sample_frames)?,
                    ..s
                })
            })
            .collect::<Result<Vec<_>>>()?;
        DatasetSplit::new(split.name, samples)
    };
    let (train, test) = (resample(train)?, resample(test)?);
    if train.frame_dim() != test.frame_dim() {
        return Err(Error::DimensionMismatch {
            expected: train.frame_dim().unwrap_or(0),
            actual: test.frame_dim().unwrap_or(0),
            context: "train vs test frame dimension".into(),
        });
    }
    let digest = dataset_digest(&train, &test);
    Ok((train, test, digest))
}

/// A sample with its generated views, one view list per caption.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSample {
    pub id: String,
    pub video: Video,
    pub video_views: Vec<Video>,
    pub captions: Vec<Text>,
    pub caption_views: Vec<Vec<Text>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedCorpus {
    pub dataset_digest: String,
    pub train: Vec<AugmentedSample>,
    pub test: Vec<AugmentedSample>,
}

enum Augmentor<'a> {
    Identity,
    Simple {
        plan: &'a AugmentPlan,
        seed: u64,
    },
    Generative {
        gen: Generator<'a>,
        mode: AugMode,
        plan: &'a AugmentPlan,
        seed: u64,
    },
}

impl Augmentor<'_> {
    fn texts(&self, text: &Text, key: &str) -> Result<Vec<Text>> {
        match self {
            Augmentor::Identity => Ok(vec![]),
            Augmentor::Simple { plan, seed } => (0..plan.k_text)
                .map(|v| {
                    let s = sample_seed(*seed, key, v as u64);
                    let cfg = SaConfig {
                        n_out_frames: plan.sa_frames,
                        n_out_words: plan.sa_words,
                        seed: s,
                    };
                    simple_augment_text(text, &cfg, &mut seeded_rng(s))
                })
                .collect(),
            Augmentor::Generative {
                gen,
                mode,
                plan,
                seed,
            } => {
                if plan.k_text == 0 {
                    return Ok(vec![]);
                }
                gen.request_paraphrases(text, plan.k_text, *mode, sample_seed(*seed, key, 0))
            }
        }
    }

    fn videos(&self, video: &Video, key: &str) -> Result<Vec<Video>> {
        match self {
            Augmentor::Identity => Ok(vec![]),
            Augmentor::Simple { plan, seed } => (0..plan.k_video)
                .map(|v| {
                    let s = sample_seed(*seed, key, v as u64);
                    let cfg = SaConfig {
                        n_out_frames: plan.sa_frames,
                        n_out_words: plan.sa_words,
                        seed: s,
                    };
                    simple_augment_video(video, &cfg, &mut seeded_rng(s))
                })
                .collect(),
            Augmentor::Generative {
                gen,
                mode,
                plan,
                seed,
            } => (0..plan.k_video)
                .map(|v| {
                    let style = match mode {
                        AugMode::Tpvs => Some(gen.styles[v % gen.styles.len()].as_str()),
                        AugMode::Re => None,
                    };
                    gen.request_stylized_video(
                        video,
                        *mode,
                        style,
                        sample_seed(*seed, key, v as u64),
                    )
                })
                .collect(),
        }
    }

    fn sample(&self, s: &PairedSample, captions: Vec<Text>) -> Result<AugmentedSample> {
        let caption_views = captions
            .iter()
            .enumerate()
            .map(|(c, t)| self.texts(t, &format!("{}/caption{c}", s.id)))
            .collect::<Result<Vec<_>>>()?;
        Ok(AugmentedSample {
            id: s.id.clone(),
            video_views: self.videos(&s.video, &format!("{}/video", s.id))?,
            video: s.video.clone(),
            captions,
            caption_views,
        })
    }
}

fn train_captions(s: &PairedSample, policy: TrainCaptions) -> Result<Vec<Text>> {
    Ok(match policy {
        TrainCaptions::Primary => vec![s.caption.clone()],
        TrainCaptions::EachCaption => s.all_captions().cloned().collect(),
        TrainCaptions::Paragraph => {
            let sources: Vec<&str> = s.all_captions().map(Text::source).collect();
            vec![concat_captions(&sources)?]
        }
    })
}

fn open_backend(cfg: &ExperimentConfig) -> Result<Box<dyn Backend>> {
    let argv = cfg
        .augment
        .backend
        .as_ref()
        .ok_or_else(|| Error::Config("generative strategy without a backend".into()))?;
    if argv.len() == 1 && argv[0] == MOCK_BACKEND {
        return Ok(Box::new(MockBackend::new(
            cfg.runtime.cache_dir.join("mock-work"),
        )?));
    }
    Ok(Box::new(SubprocessBackend::spawn(
        argv,
        Duration::from_secs(cfg.runtime.backend_timeout_secs),
    )?))
}

fn augment_splits(
    cfg: &ExperimentConfig,
    seed: u64,
    train: &DatasetSplit,
    test: &DatasetSplit,
) -> Result<(Vec<AugmentedSample>, Vec<AugmentedSample>)> {
    let plan = &cfg.augment;
    let needs_backend = plan.strategy.is_generative() && plan.view_counts() != (0, 0);
    let (backend, cache) = if needs_backend {
        (
            Some(open_backend(cfg)?),
            Some(Cache::open(&cfg.runtime.cache_dir)?),
        )
    } else {
        (None, None)
    };
    let aug = match (plan.strategy, &backend, &cache) {
        (Strategy::None, ..) => Augmentor::Identity,
        (Strategy::Sa, ..) => Augmentor::Simple { plan, seed },
        (s, Some(b), Some(c)) => Augmentor::Generative {
            gen: Generator::new(b.as_ref(), c).with_styles(plan.styles.clone()),
            mode: if s == Strategy::Tpvs {
                AugMode::Tpvs
            } else {
                AugMode::Re
            },
            plan,
            seed,
        },
        _ => Augmentor::Identity,
    };
    let test_aug = if plan.test_time {
        &aug
    } else {
        &Augmentor::Identity
    };
    let train_out = train
        .samples
        .iter()
        .map(|s| aug.sample(s, train_captions(s, cfg.train_captions)?))
        .collect::<Result<Vec<_>>>()?;
    let test_out = test
        .samples
        .iter()
        .map(|s| test_aug.sample(s, s.all_captions().cloned().collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok((train_out, test_out))
}

/// Loads the data and generates every view the plan asks for.
pub fn augment_corpus(cfg: &ExperimentConfig, seed: u64) -> Result<AugmentedCorpus> {
    let (train, test, dataset_digest) = stage("load", load_data(cfg, seed))?;
    info!(
        "loaded {} train / {} test pairs (dataset {})",
        train.len(),
        test.len(),
        &dataset_digest[..12]
    );
    let (train, test) = stage("augment", augment_splits(cfg, seed, &train, &test))?;
    Ok(AugmentedCorpus {
        dataset_digest,
        train,
        test,
    })
}

/// Model-ready features: each item carries one feature vector per view, or a
/// single vector when views are concatenated at the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub dataset_digest: String,
    pub frame_dim: usize,
    pub train: Vec<TrainingItem>,
    pub test_ids: Vec<String>,
    pub test_videos: Vec<Vec<Array1<f64>>>,
    pub test_texts: Vec<Vec<Array1<f64>>>,
    /// Index into `test_videos` for each entry of `test_texts`.
    pub test_owner: Vec<usize>,
}

struct Composer<'a> {
    cfg: &'a ExperimentConfig,
    featurizer: TextFeaturizer,
}

impl Composer<'_> {
    fn bundle(&self, s: &AugmentedSample, c: usize, with_videos: bool) -> Result<ViewBundle> {
        let original = PairedSample {
            id: s.id.clone(),
            video: s.video.clone(),
            caption: s.captions[c].clone(),
            extra_captions: vec![],
        };
        let videos = if with_videos {
            s.video_views.clone()
        } else {
            vec![]
        };
        ViewBundle::new(
            original,
            s.caption_views[c].clone(),
            videos,
            self.cfg.augment.composition,
        )
    }

    fn video(&self, s: &AugmentedSample) -> Result<Vec<Array1<f64>>> {
        match self.cfg.augment.composition {
            Composition::Concat => {
                let b = self.bundle(s, 0, true)?;
                let cap = self
                    .cfg
                    .augment
                    .max_frames
                    .unwrap_or_else(|| b.default_max_frames(self.cfg.n_sample_frames));
                Ok(vec![video_features(&compose_video(&b, cap)?)])
            }
            Composition::MeanOfViewEmbeddings => Ok(std::iter::once(&s.video)
                .chain(&s.video_views)
                .map(video_features)
                .collect()),
        }
    }

    fn text(&self, s: &AugmentedSample, c: usize) -> Result<Vec<Array1<f64>>> {
        match self.cfg.augment.composition {
            Composition::Concat => {
                let b = self.bundle(s, c, false)?;
                Ok(vec![self.featurizer.featurize(&compose_text(
                    &b,
                    self.cfg.augment.max_tokens,
                )?)])
            }
            Composition::MeanOfViewEmbeddings => Ok(std::iter::once(&s.captions[c])
                .chain(&s.caption_views[c])
                .map(|t| self.featurizer.featurize(t))
                .collect()),
        }
    }
}

/// Composes views into features for training and evaluation.
pub fn compose(cfg: &ExperimentConfig, corpus: &AugmentedCorpus) -> Result<Prepared> {
    stage("compose", compose_inner(cfg, corpus))
}

fn compose_inner(cfg: &ExperimentConfig, corpus: &AugmentedCorpus) -> Result<Prepared> {
    let composer = Composer {
        cfg,
        featurizer: TextFeaturizer::new(cfg.encoder.text_dim_in, cfg.encoder.hash_seed)?,
    };
    let frame_dim = corpus
        .train
        .first()
        .map(|s| s.video.dim())
        .ok_or_else(|| Error::invalid("empty training split"))?;
    let mut train = Vec::new();
    for s in &corpus.train {
        let video_views = composer.video(s)?;
        for c in 0..s.captions.len() {
            train.push(TrainingItem {
                video_views: video_views.clone(),
                text_views: composer.text(s, c)?,
            });
        }
    }
    let mut prepared = Prepared {
        dataset_digest: corpus.dataset_digest.clone(),
        frame_dim,
        train,
        test_ids: vec![],
        test_videos: vec![],
        test_texts: vec![],
        test_owner: vec![],
    };
    for (i, s) in corpus.test.iter().enumerate() {
        prepared.test_ids.push(s.id.clone());
        prepared.test_videos.push(composer.video(s)?);
        for c in 0..s.captions.len() {
            prepared.test_texts.push(composer.text(s, c)?);
            prepared.test_owner.push(i);
        }
    }
    Ok(prepared)
}

/// [`augment_corpus`] followed by [`compose`].
pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<Prepared> {
    compose(cfg, &augment_corpus(cfg, seed)?)
}

fn init_heads(cfg: &ExperimentConfig, seed: u64, frame_dim: usize) -> Result<Heads> {
    let e = &cfg.encoder;
    Ok(Heads {
        video: ProjectionHead::random(
            frame_dim,
            e.dim_out,
            e.bias,
            Hash64::new().u64(seed).str("video-head").finish(),
        )?,
        text: ProjectionHead::random(
            e.text_dim_in,
            e.dim_out,
            e.bias,
            Hash64::new().u64(seed).str("text-head").finish(),
        )?,
    })
}

/// Trains freshly initialized heads on the prepared training items.
pub fn run_training(
    cfg: &ExperimentConfig,
    seed: u64,
    prepared: &Prepared,
) -> Result<(Heads, Vec<TraceRecord>)> {
    stage(
        "train",
        (|| {
            let mut heads = init_heads(cfg, seed, prepared.frame_dim)?;
            let tc = crate::train::TrainConfig { seed, ..cfg.train };
            let trace = train_run(&prepared.train, &mut heads, &tc)?;
            if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
                info!(
                    "trained {} steps, loss {:.4} -> {:.4}",
                    trace.len(),
                    first.loss,
                    last.loss
                );
            }
            Ok((heads, trace))
        })(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub t2v: RetrievalReport,
    pub v2t: RetrievalReport,
    pub videos: Vec<Embedding>,
    pub texts: Vec<Embedding>,
}

/// Embeds the test split and ranks both directions.
pub fn evaluate(cfg: &ExperimentConfig, prepared: &Prepared, heads: &Heads) -> Result<Evaluation> {
    stage(
        "evaluate",
        (|| {
            let videos = prepared
                .test_videos
                .iter()
                .map(|v| embed_views(&heads.video, v))
                .collect::<Result<Vec<_>>>()?;
            let texts = prepared
                .test_texts
                .iter()
                .map(|t| embed_views(&heads.text, t))
                .collect::<Result<Vec<_>>>()?;
            let opts = EvalOptions {
                ks: cfg.eval.ks.clone(),
                policy: cfg.eval.policy,
                threads: cfg.runtime.eval_threads,
            };
            let (t2v, v2t) = evaluate_bidirectional(&videos, &texts, &prepared.test_owner, &opts)?;
            Ok(Evaluation {
                t2v,
                v2t,
                videos,
                texts,
            })
        })(),
    )
}

/// Everything a run produced, plus what is needed to check it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub name: String,
    pub config_digest: String,
    pub dataset_digest: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Canonical config; its digest is `config_digest`.
    pub config: serde_json::Value,
    /// Artifact role -> file name relative to the run directory.
    pub artifacts: BTreeMap<String, String>,
    pub t2v: RetrievalReport,
    pub v2t: RetrievalReport,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        m.verify()?;
        Ok(m)
    }

    /// Recomputes the config digest from the stored config.
    pub fn verify(&self) -> Result<()> {
        let actual = digest_value(&self.config);
        if actual != self.config_digest {
            return Err(Error::invalid(format!(
                "run manifest for {:?}: config digest {} does not match stored config ({actual})",
                self.name, self.config_digest
            )));
        }
        Ok(())
    }
}

/// Seed-level report: metrics plus the identifiers needed to compare runs.
#[derive(Serialize)]
struct ReportDoc<'a> {
    name: &'a str,
    config_digest: &'a str,
    dataset_digest: &'a str,
    seed: u64,
    t2v: &'a RetrievalReport,
    v2t: &'a RetrievalReport,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_run_dir(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<PathBuf> {
    let dir = cfg.run_dir(out, seed);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn save_training(dir: &Path, heads: &Heads, trace: &[TraceRecord]) -> Result<()> {
    write_head(&dir.join(ARTIFACT_NAMES[0]), &heads.video)?;
    write_head(&dir.join(ARTIFACT_NAMES[1]), &heads.text)?;
    write_trace(&dir.join(ARTIFACT_NAMES[2]), trace)
}

fn save_evaluation(
    cfg: &ExperimentConfig,
    seed: u64,
    dir: &Path,
    started_unix: u64,
    dataset_digest: &str,
    eval: &Evaluation,
) -> Result<RunManifest> {
    write_embeddings(&dir.join(ARTIFACT_NAMES[3]), &eval.videos)?;
    write_embeddings(&dir.join(ARTIFACT_NAMES[4]), &eval.texts)?;
    let config_digest = cfg.digest();
    let doc = ReportDoc {
        name: &cfg.name,
        config_digest: &config_digest,
        dataset_digest,
        seed,
        t2v: &eval.t2v,
        v2t: &eval.v2t,
    };
    let json = serde_json::to_string_pretty(&doc).expect("report serializes") + "\n";
    write_text(&dir.join(ARTIFACT_NAMES[5]), &json)?;

    let roles = [
        "video_head",
        "text_head",
        "loss_trace",
        "video_embeddings",
        "text_embeddings",
        "report_json",
        "report_text",
    ];
    let artifacts = roles
        .iter()
        .zip(ARTIFACT_NAMES)
        .filter(|(_, f)| *f == ARTIFACT_NAMES[6] || dir.join(f).is_file())
        .map(|(r, f)| (r.to_string(), f.to_string()))
        .collect();
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        name: cfg.name.clone(),
        config_digest,
        dataset_digest: dataset_digest.to_string(),
        seed,
        started_unix,
        finished_unix: unix_now(),
        config: cfg.canonical_value(),
        artifacts,
        t2v: eval.t2v.clone(),
        v2t: eval.v2t.clone(),
    };
    let table = write_report(std::slice::from_ref(&manifest))?;
    write_text(&dir.join(ARTIFACT_NAMES[6]), &table.to_text())?;
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_text(&dir.join(MANIFEST_NAME), &json)?;
    Ok(manifest)
}

/// augment -> compose -> train -> evaluate, writing every artifact under
/// `<out>/<config digest>/<seed>/`.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let started = unix_now();
    let prepared = prepare(cfg, seed)?;
    let (heads, trace) = run_training(cfg, seed, &prepared)?;
    let eval = evaluate(cfg, &prepared, &heads)?;
    stage(
        "write",
        (|| {
            let dir = create_run_dir(cfg, seed, out)?;
            save_training(&dir, &heads, &trace)?;
            let m = save_evaluation(cfg, seed, &dir, started, &prepared.dataset_digest, &eval)?;
            info!("{}: wrote {}", cfg.name, dir.display());
            Ok(m)
        })(),
    )
}

/// Trains and saves heads and the loss trace; returns the run directory.
pub fn train_and_save(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    let prepared = prepare(cfg, seed)?;
    let (heads, trace) = run_training(cfg, seed, &prepared)?;
    stage(
        "write",
        (|| {
            let dir = create_run_dir(cfg, seed, out)?;
            save_training(&dir, &heads, &trace)?;
            Ok(dir)
        })(),
    )
}

pub fn load_run_heads(dir: &Path) -> Result<Heads> {
    Ok(Heads {
        video: read_head(&dir.join(ARTIFACT_NAMES[0]))?,
        text: read_head(&dir.join(ARTIFACT_NAMES[1]))?,
    })
}

/// Evaluates heads saved by [`train_and_save`] and writes reports.
pub fn evaluate_saved(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let started = unix_now();
    let dir = cfg.run_dir(out, seed);
    let heads = stage("load", load_run_heads(&dir))?;
    let prepared = prepare(cfg, seed)?;
    let eval = evaluate(cfg, &prepared, &heads)?;
    stage(
        "write",
        save_evaluation(cfg, seed, &dir, started, &prepared.dataset_digest, &eval),
    )
}

#[derive(Serialize)]
struct CaptionRecord<'a> {
    caption: &'a str,
    views: Vec<&'a str>,
}

#[derive(Serialize)]
struct ViewRecord<'a> {
    id: &'a str,
    captions: Vec<CaptionRecord<'a>>,
    video_views: Vec<String>,
}

/// Writes generated views as `views_{train,test}.jsonl` plus frame files under
/// `<run dir>/views/`; returns that directory.
pub fn export_views(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    let corpus = augment_corpus(cfg, seed)?;
    stage(
        "write",
        (|| {
            let dir = cfg.run_dir(out, seed).join("views");
            for (tag, samples) in [("train", &corpus.train), ("test", &corpus.test)] {
                let frames_dir = dir.join(format!("frames_{tag}"));
                fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
                let mut lines = String::new();
                for (i, s) in samples.iter().enumerate() {
                    let mut video_views = vec![];
                    for (v, video) in s.video_views.iter().enumerate() {
                        let rel = format!("frames_{tag}/{i:06}_v{v}.vtrf");
                        write_frames(&dir.join(&rel), video)?;
                        video_views.push(rel);
                    }
                    let rec = ViewRecord {
                        id: &s.id,
                        captions: s
                            .captions
                            .iter()
                            .zip(&s.caption_views)
                            .map(|(c, vs)| CaptionRecord {
                                caption: c.source(),
                                views: vs.iter().map(Text::source).collect(),
                            })
                            .collect(),
                        video_views,
                    };
                    lines.push_str(&serde_json::to_string(&rec).expect("record serializes"));
                    lines.push('\n');
                }
                write_text(&dir.join(format!("views_{tag}.jsonl")), &lines)?;
            }
            Ok(dir)
        })(),
    )
}

/// One run per grid point; writes `sweep_report.{txt,json}` into `out`.
pub fn sweep(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Vec<RunManifest>> {
    cfg.validate()?;
    let strategies = if cfg.sweep.strategies.is_empty() {
        vec![cfg.augment.strategy]
    } else {
        cfg.sweep.strategies.clone()
    };
    let mut points = vec![];
    for &strategy in &strategies {
        if strategy == Strategy::None {
            let mut c = cfg.clone();
            c.name = format!("{}-none", cfg.name);
            c.augment.strategy = Strategy::None;
            points.push(c);
            continue;
        }
        for &kt in &cfg.sweep.k_text {
            for &kv in &cfg.sweep.k_video {
                let mut c = cfg.clone();
                c.name = format!("{}-{}-t{kt}-v{kv}", cfg.name, strategy.name());
                c.augment.strategy = strategy;
                c.augment.k_text = kt;
                c.augment.k_video = kv;
                points.push(c);
            }
        }
    }
    // Fail before any work if a grid point is invalid.
    for c in &points {
        c.validate()?;
    }
    let mut manifests = vec![];
    for c in &points {
        info!("sweep: {}", c.name);
        manifests.push(run_experiment(c, seed, out)?);
    }
    let table = write_report(&manifests)?;
    stage(
        "write",
        (|| {
            fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            write_text(&out.join("sweep_report.txt"), &table.to_text())?;
            write_text(&out.join("sweep_report.json"), &table.to_json())
        })(),
    )?;
    Ok(manifests)
}
