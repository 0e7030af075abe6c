//! Hermetic stand-ins for the text and image generators.
//!
//! Paraphrase: rotate the tokens left by `k_index` and prepend `para<k_index>`;
//! relevance mode also appends one word from a fixed 64-word lexicon chosen by
//! hashing the caption tokens with the seed.
//!
//! Stylize: a named style maps every frame through a fixed orthonormal matrix
//! derived from the style id (`"id"` is the identity) and renormalizes; relevance
//! mode adds `0.1 * u` with `u` a unit vector keyed by (seed, frame index) and
//! renormalizes.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use rand_distr::{Distribution, StandardNormal};

use super::prompt::caption_from_prompt;
use super::protocol::{Backend, WireReply, WireRequest};
use super::{AugMode, AugOp};
use crate::corpus::{read_frames, tokenize, write_frames, Text, Video};
use crate::hashing::Hash64;
use crate::simple::seeded_rng;
use crate::{Error, Result};

pub const RELEVANCE_LEXICON: [&str; 64] = [
    "outdoors",
    "indoors",
    "crowd",
    "music",
    "sunlight",
    "night",
    "street",
    "kitchen",
    "stage",
    "field",
    "water",
    "beach",
    "forest",
    "city",
    "car",
    "road",
    "animal",
    "dog",
    "cat",
    "horse",
    "bird",
    "child",
    "woman",
    "man",
    "team",
    "ball",
    "game",
    "dance",
    "song",
    "guitar",
    "piano",
    "camera",
    "screen",
    "phone",
    "computer",
    "food",
    "cooking",
    "recipe",
    "news",
    "interview",
    "audience",
    "laughing",
    "talking",
    "walking",
    "running",
    "driving",
    "swimming",
    "playing",
    "colorful",
    "bright",
    "dark",
    "slow",
    "fast",
    "close",
    "wide",
    "tutorial",
    "cartoon",
    "movie",
    "trailer",
    "sports",
    "fashion",
    "travel",
    "nature",
    "weather",
];

/// Perturbation size for relevance stylization.
pub const RELEVANCE_EPS: f64 = 0.1;

/// How far a named style's matrix strays from the identity before orthonormalization.
pub const STYLE_STRENGTH: f64 = 0.25;

/// The identity style key.
pub const IDENTITY_STYLE: &str = "id";

pub fn mock_paraphrase(caption: &Text, k_index: usize, mode: AugMode, seed: u64) -> Text {
    let toks = caption.tokens();
    let shift = k_index % toks.len();
    let mut out = Vec::with_capacity(toks.len() + 2);
    out.push(format!("para{k_index}"));
    out.extend(toks[shift..].iter().cloned());
    out.extend(toks[..shift].iter().cloned());
    if mode == AugMode::Re {
        let h = toks
            .iter()
            .fold(Hash64::new().u64(seed), |h, t| h.str(t))
            .finish();
        out.push(RELEVANCE_LEXICON[(h % 64) as usize].to_string());
    }
    Text::from_tokens(out).expect("mock paraphrase tokens are normalized")
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Row-major orthonormal `dim x dim` matrix for `style`.
pub fn style_matrix(style: &str, dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim * dim];
    for i in 0..dim {
        m[i * dim + i] = 1.0;
    }
    if style == IDENTITY_STYLE {
        return m;
    }
    let mut rng = seeded_rng(Hash64::new().str("style").str(style).finish());
    let scale = STYLE_STRENGTH / (dim as f64).sqrt();
    for x in m.iter_mut() {
        let g: f64 = StandardNormal.sample(&mut rng);
        *x += scale * g;
    }
    // Modified Gram-Schmidt over rows.
    for i in 0..dim {
        for j in 0..i {
            let dot: f64 = (0..dim).map(|c| m[i * dim + c] * m[j * dim + c]).sum();
            for c in 0..dim {
                m[i * dim + c] -= dot * m[j * dim + c];
            }
        }
        normalize(&mut m[i * dim..(i + 1) * dim]);
    }
    m
}

/// Unit direction used by relevance stylization for one frame.
pub fn relevance_direction(seed: u64, frame_index: usize, dim: usize) -> Vec<f64> {
    let mut rng = seeded_rng(Hash64::new().u64(seed).u64(frame_index as u64).finish());
    let mut u: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut u);
    u
}

pub fn mock_stylize(video: &Video, mode: AugMode, style: Option<&str>, seed: u64) -> Result<Video> {
    let dim = video.dim();
    let rot = match (mode, style) {
        (AugMode::Tpvs, Some(s)) => Some(style_matrix(s, dim)),
        (AugMode::Re, None) => None,
        (AugMode::Tpvs, None) => return Err(Error::invalid("stylization needs a style id")),
        (AugMode::Re, Some(_)) => {
            return Err(Error::invalid("relevance stylization takes no style id"))
        }
    };
    let mut data = Vec::with_capacity(video.as_flat().len());
    for (fi, frame) in video.frames().enumerate() {
        let v: Vec<f64> = frame.iter().map(|&x| f64::from(x)).collect();
        let mut out = match &rot {
            Some(m) => (0..dim)
                .map(|r| (0..dim).map(|c| m[r * dim + c] * v[c]).sum())
                .collect(),
            None => {
                let u = relevance_direction(seed, fi, dim);
                v.iter()
                    .zip(&u)
                    .map(|(a, b)| a + RELEVANCE_EPS * b)
                    .collect::<Vec<f64>>()
            }
        };
        normalize(&mut out);
        data.extend(out.iter().map(|&x| x as f32));
    }
    Video::from_flat(video.id.clone(), dim, data)
}

/// Answers one wire request with the mock rules, writing stylized frames into `work_dir`.
pub fn answer(req: &WireRequest, work_dir: &Path) -> WireReply {
    match try_answer(req, work_dir) {
        Ok(r) => r,
        Err(e) => WireReply::error(&req.id, e.to_string()),
    }
}

fn try_answer(req: &WireRequest, work_dir: &Path) -> Result<WireReply> {
    match req.op {
        AugOp::Paraphrase => {
            let prompt = req
                .prompt
                .as_deref()
                .ok_or_else(|| Error::invalid("paraphrase request without prompt"))?;
            let caption = caption_from_prompt(prompt)
                .ok_or_else(|| Error::invalid("prompt does not embed a caption"))?;
            let caption = tokenize(caption)?;
            let texts = (0..req.k)
                .map(|k| {
                    mock_paraphrase(&caption, k, req.mode, req.seed)
                        .source()
                        .to_string()
                })
                .collect();
            Ok(WireReply::ok_texts(&req.id, texts))
        }
        AugOp::Stylize => {
            let input = req
                .frames_in
                .as_deref()
                .ok_or_else(|| Error::invalid("stylize request without frames_in"))?;
            let video = read_frames(Path::new(input), "frames")?;
            let out = mock_stylize(&video, req.mode, req.style.as_deref(), req.seed)?;
            let path = work_dir.join(format!("{}.vtrf", req.id));
            write_frames(&path, &out)?;
            Ok(WireReply::ok_frames(
                &req.id,
                path.to_string_lossy().into_owned(),
            ))
        }
    }
}

/// In-process mock backend that counts its invocations.
pub struct MockBackend {
    id: String,
    work_dir: PathBuf,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(work_dir: impl Into<PathBuf>) -> Result<Self> {
        let work_dir = work_dir.into();
        std::fs::create_dir_all(&work_dir).map_err(|e| Error::io(&work_dir, e))?;
        Ok(Self {
            id: "mock".into(),
            work_dir,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn invoke(&self, req: &WireRequest) -> Result<WireReply> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(answer(req, &self.work_dir))
    }
}

/// Serves the mock over newline-delimited JSON until EOF. With `reorder > 1`,
/// replies are held back and released in reverse order every `reorder`
/// requests, or once input has been idle for `idle` (if set).
pub fn serve<R, W>(
    input: R,
    mut output: W,
    work_dir: &Path,
    reorder: usize,
    idle: Option<Duration>,
) -> Result<()>
where
    R: BufRead + Send + 'static,
    W: Write,
{
    std::fs::create_dir_all(work_dir).map_err(|e| Error::io(work_dir, e))?;
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in input.lines() {
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    let mut held: Vec<WireReply> = Vec::new();
    let flush = |held: &mut Vec<WireReply>, output: &mut W| -> Result<()> {
        while let Some(r) = held.pop() {
            writeln!(
                output,
                "{}",
                serde_json::to_string(&r).expect("reply serializes")
            )
            .map_err(|e| Error::io("<stdout>", e))?;
        }
        output.flush().map_err(|e| Error::io("<stdout>", e))
    };
    loop {
        let next = match idle {
            Some(d) => rx.recv_timeout(d),
            None => rx.recv().map_err(|_| RecvTimeoutError::Disconnected),
        };
        let line = match next {
            Ok(line) => line.map_err(|e| Error::io("<stdin>", e))?,
            Err(RecvTimeoutError::Timeout) => {
                flush(&mut held, &mut output)?;
                continue;
            }
            Err(RecvTimeoutError::Disconnected) => break,
        };
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<WireRequest>(&line) {
            Ok(req) => answer(&req, work_dir),
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|i| i.as_str()).map(str::to_string))
                    .unwrap_or_default();
                WireReply::error(&id, format!("bad request: {e}"))
            }
        };
        held.push(reply);
        if held.len() >= reorder.max(1) {
            flush(&mut held, &mut output)?;
        }
    }
    flush(&mut held, &mut output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generative::Status;

    fn toks(t: &Text) -> Vec<&str> {
        t.tokens().iter().map(String::as_str).collect()
    }

    #[test]
    fn paraphrase_rule() {
        let c = tokenize("a dog runs").unwrap();
        assert_eq!(
            toks(&mock_paraphrase(&c, 1, AugMode::Tpvs, 0)),
            ["para1", "dog", "runs", "a"]
        );
        let x = tokenize("x").unwrap();
        assert_eq!(
            toks(&mock_paraphrase(&x, 0, AugMode::Tpvs, 0)),
            ["para0", "x"]
        );
        for k in 0..5 {
            let tp = mock_paraphrase(&c, k, AugMode::Tpvs, 7);
            let re = mock_paraphrase(&c, k, AugMode::Re, 7);
            assert_eq!(re.len(), tp.len() + 1);
            assert_eq!(re.tokens()[..tp.len()], tp.tokens()[..]);
            assert!(RELEVANCE_LEXICON.contains(&re.tokens().last().unwrap().as_str()));
        }
    }

    #[test]
    fn lexicon_words_are_unique_tokens() {
        let mut words = RELEVANCE_LEXICON.to_vec();
        words.sort();
        words.dedup();
        assert_eq!(words.len(), 64);
        for w in RELEVANCE_LEXICON {
            assert_eq!(tokenize(w).unwrap().tokens(), [w]);
        }
    }

    fn unit_video(seed: u64, n: usize, dim: usize) -> Video {
        let mut rng = seeded_rng(seed);
        let frames = (0..n)
            .map(|_| {
                let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                normalize(&mut v);
                v.into_iter().map(|x| x as f32).collect()
            })
            .collect();
        Video::new("v", frames).unwrap()
    }

    #[test]
    fn identity_style_normalizes() {
        let v = Video::new("v", vec![vec![3.0, 4.0], vec![0.0, 2.0]]).unwrap();
        let out = mock_stylize(&v, AugMode::Tpvs, Some("id"), 0).unwrap();
        assert_eq!(out.frame(0), [0.6, 0.8]);
        assert_eq!(out.frame(1), [0.0, 1.0]);
    }

    #[test]
    fn style_matrix_is_orthonormal_and_keyed() {
        let m = style_matrix("cartoon", 8);
        for i in 0..8 {
            for j in 0..8 {
                let d: f64 = (0..8).map(|c| m[i * 8 + c] * m[j * 8 + c]).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        assert_ne!(m, style_matrix("sketch", 8));
        assert_eq!(m, style_matrix("cartoon", 8));
    }

    #[test]
    fn stylize_is_deterministic() {
        let v = unit_video(1, 4, 16);
        let a = mock_stylize(&v, AugMode::Tpvs, Some("cartoon"), 0).unwrap();
        let b = mock_stylize(&v, AugMode::Tpvs, Some("cartoon"), 99).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.n_frames(), a.dim()), (4, 16));
        let r1 = mock_stylize(&v, AugMode::Re, None, 5).unwrap();
        let r2 = mock_stylize(&v, AugMode::Re, None, 5).unwrap();
        assert_eq!(r1, r2);
        assert_ne!(r1, mock_stylize(&v, AugMode::Re, None, 6).unwrap());
        assert!(mock_stylize(&v, AugMode::Re, Some("cartoon"), 5).is_err());
        assert!(mock_stylize(&v, AugMode::Tpvs, None, 5).is_err());
    }

    #[test]
    fn relevance_stays_close_to_unit_input() {
        // For unit v and unit u, cos(v, v + eps u) >= sqrt(1 - eps^2), attained at u.v = -eps.
        let bound = (1.0 - RELEVANCE_EPS * RELEVANCE_EPS).sqrt();
        assert!(bound > 0.99);
        for seed in 0..20 {
            let v = unit_video(seed, 6, 12);
            let out = mock_stylize(&v, AugMode::Re, None, seed).unwrap();
            for (a, b) in v.frames().zip(out.frames()) {
                let na: f64 = b.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
                assert!((na - 1.0).abs() < 1e-6);
                let cos: f64 = a
                    .iter()
                    .zip(b)
                    .map(|(&x, &y)| f64::from(x) * f64::from(y))
                    .sum();
                assert!(cos >= bound - 1e-6 && cos >= 0.99, "cos {cos}");
            }
        }
    }

    #[test]
    fn serve_replies_reversed_in_batches() {
        let dir = tempfile::tempdir().unwrap();
        let mk = |id: &str| {
            let req = WireRequest {
                id: id.into(),
                op: AugOp::Paraphrase,
                mode: AugMode::Tpvs,
                prompt: Some(crate::generative::build_prompt("a b", AugMode::Tpvs).unwrap()),
                frames_in: None,
                style: None,
                guess_mode: false,
                k: 1,
                seed: 0,
            };
            serde_json::to_string(&req).unwrap()
        };
        let input = format!("{}\n{}\n{}\nnot json\n", mk("1"), mk("2"), mk("3"));
        let mut out = Vec::new();
        serve(
            std::io::Cursor::new(input.into_bytes()),
            &mut out,
            dir.path(),
            2,
            None,
        )
        .unwrap();
        let replies: Vec<WireReply> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        let ids: Vec<&str> = replies.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["2", "1", "", "3"]);
        assert_eq!(
            replies[0].texts.as_deref(),
            Some(&["para0 a b".to_string()][..])
        );
        assert_eq!(replies[2].status, Status::Error);
    }
}
