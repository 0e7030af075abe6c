//! Paraphrase and stylization augmentation through pluggable generator backends.
//!
//! Requests are canonicalized and digested with SHA-256; the digest is both the
//! cache key and the wire id. Backends are anything implementing [`Backend`]: the
//! in-process [`mock::MockBackend`], or an external executable speaking the
//! newline-delimited protocol in [`protocol`].

pub mod cache;
pub mod mock;
pub mod prompt;
pub mod protocol;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_frames, tokenize, Text, Video};
use crate::hashing::sha256_hex;
use crate::{Error, Result};

pub use cache::Cache;
pub use prompt::build_prompt;
pub use protocol::{Backend, WireReply, WireRequest};

/// Which generative strategy a request belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugMode {
    /// Text paraphrasing and video stylization under a named style.
    Tpvs,
    /// Relevance enhancing: open-ended paraphrases, text-free (guess mode) stylization.
    Re,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugOp {
    Paraphrase,
    Stylize,
}

/// What the generator works on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Caption(String),
    /// SHA-256 of the input frame file.
    Frames(String),
}

pub const DEFAULT_STYLES: [&str; 4] = ["cartoon", "sketch", "oil-painting", "watercolor"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationRequest {
    pub backend_id: String,
    pub op: AugOp,
    pub mode: AugMode,
    pub payload: Payload,
    pub style: Option<String>,
    pub guess_mode: bool,
    pub k: usize,
    pub seed: u64,
    /// Where the input frames live; transport only, not part of the digest.
    #[serde(skip)]
    pub frames_in: Option<PathBuf>,
}

impl AugmentationRequest {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("augmentation request with k = 0"));
        }
        match (self.op, &self.payload) {
            (AugOp::Paraphrase, Payload::Caption(c)) if !c.trim().is_empty() => {}
            (AugOp::Stylize, Payload::Frames(_)) => {}
            (op, _) => {
                return Err(Error::invalid(format!(
                    "payload does not match {op:?} request"
                )))
            }
        }
        if self.op == AugOp::Stylize {
            match self.mode {
                AugMode::Re if !self.guess_mode || self.style.is_some() => {
                    return Err(Error::invalid(
                        "relevance stylization runs in guess mode without a style",
                    ))
                }
                AugMode::Tpvs if self.guess_mode || self.style.is_none() => {
                    return Err(Error::invalid(
                        "stylization needs a style and no guess mode",
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical (field-ordered, compact JSON) serialization.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("request serializes");
        sha256_hex(&canonical)
    }

    pub fn to_wire(&self, id: &str) -> Result<WireRequest> {
        let prompt = match &self.payload {
            Payload::Caption(c) => Some(build_prompt(c, self.mode)?),
            Payload::Frames(_) => None,
        };
        Ok(WireRequest {
            id: id.to_string(),
            op: self.op,
            mode: self.mode,
            prompt,
            frames_in: self
                .frames_in
                .as_ref()
                .map(|p| p.to_string_lossy().into_owned()),
            style: self.style.clone(),
            guess_mode: self.guess_mode,
            k: self.k,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationResponse {
    pub request_digest: String,
    pub status: Status,
    /// Captions, or cache-relative frame file paths for stylization.
    pub outputs: Vec<String>,
    pub backend_meta: String,
}

/// Backend, cache and style list bundled for issuing augmentation requests.
pub struct Generator<'a> {
    pub backend: &'a dyn Backend,
    pub cache: &'a Cache,
    pub styles: Vec<String>,
}

impl<'a> Generator<'a> {
    pub fn new(backend: &'a dyn Backend, cache: &'a Cache) -> Self {
        Self {
            backend,
            cache,
            styles: DEFAULT_STYLES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn with_styles(mut self, styles: Vec<String>) -> Self {
        self.styles = styles;
        self
    }

    pub fn paraphrase_request(
        &self,
        caption: &Text,
        k: usize,
        mode: AugMode,
        seed: u64,
    ) -> AugmentationRequest {
        AugmentationRequest {
            backend_id: self.backend.id().to_string(),
            op: AugOp::Paraphrase,
            mode,
            payload: Payload::Caption(caption.source().to_string()),
            style: None,
            guess_mode: false,
            k,
            seed,
            frames_in: None,
        }
    }

    /// `k` tokenized paraphrases of `caption`.
    pub fn request_paraphrases(
        &self,
        caption: &Text,
        k: usize,
        mode: AugMode,
        seed: u64,
    ) -> Result<Vec<Text>> {
        let req = self.paraphrase_request(caption, k, mode, seed);
        let resp = self.cache.resolve_or_invoke(self.backend, &req)?;
        if resp.outputs.len() != k {
            return Err(Error::backend(
                &resp.request_digest,
                format!("asked for {k} paraphrases, got {}", resp.outputs.len()),
            ));
        }
        resp.outputs
            .iter()
            .map(|s| {
                tokenize(s).map_err(|e| {
                    Error::backend(&resp.request_digest, format!("unusable paraphrase: {e}"))
                })
            })
            .collect()
    }

    /// One stylized copy of `video`, frame by frame. `style` must be set for
    /// [`AugMode::Tpvs`] and absent for [`AugMode::Re`].
    pub fn request_stylized_video(
        &self,
        video: &Video,
        mode: AugMode,
        style: Option<&str>,
        seed: u64,
    ) -> Result<Video> {
        match (mode, style) {
            (AugMode::Tpvs, None) => return Err(Error::invalid("stylization needs a style id")),
            (AugMode::Tpvs, Some(s)) if !self.styles.iter().any(|x| x == s) => {
                return Err(Error::invalid(format!(
                    "style {s:?} is not in the configured list"
                )))
            }
            (AugMode::Re, Some(_)) => {
                return Err(Error::invalid("relevance stylization takes no style id"))
            }
            _ => {}
        }
        let (frames_digest, frames_path) = self.cache.store_frames(video)?;
        let req = AugmentationRequest {
            backend_id: self.backend.id().to_string(),
            op: AugOp::Stylize,
            mode,
            payload: Payload::Frames(frames_digest),
            style: style.map(str::to_string),
            guess_mode: mode == AugMode::Re,
            k: 1,
            seed,
            frames_in: Some(frames_path),
        };
        let resp = self.cache.resolve_or_invoke(self.backend, &req)?;
        let out = read_frames(&self.cache.resolve_path(&resp.outputs[0]), &video.id)?;
        if out.n_frames() != video.n_frames() || out.dim() != video.dim() {
            return Err(Error::DimensionMismatch {
                expected: video.n_frames() * video.dim(),
                actual: out.n_frames() * out.dim(),
                context: format!(
                    "stylized {}x{} vs input {}x{} (request {})",
                    out.n_frames(),
                    out.dim(),
                    video.n_frames(),
                    video.dim(),
                    resp.request_digest
                ),
            });
        }
        Ok(out)
    }
}
