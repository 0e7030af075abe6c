//! Toy feature extraction and linear projection heads.
//!
//! Text goes through a signed hashed bag of tokens; video is mean-pooled over
//! frames. Either feature vector is then projected by a [`ProjectionHead`] and
//! L2-normalized into an [`Embedding`].

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2, ArrayView1};
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{Text, Video};
use crate::hashing::Hash64;
use crate::simple::seeded_rng;
use crate::{Error, Result};

/// Pre-normalization norms below this are treated as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-12;

pub const EMBEDDINGS_MAGIC: &[u8; 4] = b"VTRE";
pub const HEAD_MAGIC: &[u8; 4] = b"VTRH";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TextFeaturizer {
    pub dim_in: usize,
    pub seed: u64,
}

impl TextFeaturizer {
    pub fn new(dim_in: usize, seed: u64) -> Result<Self> {
        if dim_in < 2 {
            return Err(Error::invalid(format!(
                "text feature dimension {dim_in} < 2"
            )));
        }
        Ok(Self { dim_in, seed })
    }

    /// Bucket and sign of one token: FNV-1a over (seed, token bytes); bit 63 set means -1.
    pub fn bucket(&self, token: &str) -> (usize, f64) {
        let h = Hash64::new()
            .u64(self.seed)
            .bytes(token.as_bytes())
            .finish();
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        ((h % self.dim_in as u64) as usize, sign)
    }

    /// L2-normalized signed bucket counts. All-zero if every token cancels out.
    pub fn featurize(&self, text: &Text) -> Array1<f64> {
        let mut v = Array1::<f64>::zeros(self.dim_in);
        for t in text.tokens() {
            let (b, s) = self.bucket(t);
            v[b] += s;
        }
        let n = v.dot(&v).sqrt();
        if n > 0.0 {
            v /= n;
        }
        v
    }
}

/// Mean of the frames, as f64.
pub fn video_features(video: &Video) -> Array1<f64> {
    Array1::from(video.mean_frame())
}

/// Linear map `x -> W^T x (+ b)` with `W` stored as `dim_in x dim_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub weights: Array2<f64>,
    pub bias: Option<Array1<f64>>,
}

impl ProjectionHead {
    pub fn new(weights: Array2<f64>, bias: Option<Array1<f64>>) -> Result<Self> {
        if weights.ncols() < 2 || weights.nrows() == 0 {
            return Err(Error::invalid(format!(
                "head shape {:?} needs dim_in >= 1 and dim_out >= 2",
                weights.dim()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != weights.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: weights.ncols(),
                    actual: b.len(),
                    context: "head bias".into(),
                });
            }
        }
        let head = Self { weights, bias };
        if !head.is_finite() {
            return Err(Error::NonFinite("head parameters".into()));
        }
        Ok(head)
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(Array2::eye(dim), None)
    }

    /// Gaussian init with variance `1 / dim_in`; bias starts at zero.
    pub fn random(dim_in: usize, dim_out: usize, with_bias: bool, seed: u64) -> Result<Self> {
        let mut rng = seeded_rng(seed);
        let std = 1.0 / (dim_in as f64).sqrt();
        let w = Array2::from_shape_simple_fn((dim_in, dim_out), || {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * std
        });
        Self::new(w, with_bias.then(|| Array1::zeros(dim_out)))
    }

    pub fn dim_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim_out(&self) -> usize {
        self.weights.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|x| x.is_finite())
            && self.bias.iter().flatten().all(|x| x.is_finite())
    }

    pub fn project(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.dim_in() {
            return Err(Error::DimensionMismatch {
                expected: self.dim_in(),
                actual: x.len(),
                context: "projection input".into(),
            });
        }
        let mut y = self.weights.t().dot(&x);
        if let Some(b) = &self.bias {
            y += b;
        }
        Ok(y)
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, Array1::len)
    }
}

/// A unit-norm vector in the shared space.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Array1<f64>);

impl Embedding {
    /// Normalizes `v`; fails if its norm is below [`DEGENERATE_NORM`].
    pub fn from_unnormalized(v: Array1<f64>, context: &str) -> Result<Self> {
        let n = dot(v.as_slice().unwrap(), v.as_slice().unwrap()).sqrt();
        if !n.is_finite() {
            return Err(Error::NonFinite(context.to_string()));
        }
        if n < DEGENERATE_NORM {
            return Err(Error::Degenerate {
                norm: n,
                context: context.to_string(),
            });
        }
        Ok(Self(v / n))
    }

    pub(crate) fn from_unit(v: Array1<f64>) -> Self {
        Self(v)
    }

    pub fn vector(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        dot(self.0.as_slice().unwrap(), other.0.as_slice().unwrap())
    }
}

/// Sequential dot product; the fixed summation order keeps results bit-reproducible.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub fn embed_text(
    text: &Text,
    featurizer: &TextFeaturizer,
    head: &ProjectionHead,
) -> Result<Embedding> {
    let x = featurizer.featurize(text);
    Embedding::from_unnormalized(head.project(x.view())?, "text embedding")
}

pub fn embed_video(video: &Video, head: &ProjectionHead) -> Result<Embedding> {
    let x = video_features(video);
    Embedding::from_unnormalized(head.project(x.view())?, "video embedding")
}

/// Average of several embeddings, renormalized.
pub fn mean_of_embeddings(views: &[Embedding]) -> Result<Embedding> {
    let first = views
        .first()
        .ok_or_else(|| Error::invalid("no embeddings to average"))?;
    let mut acc = Array1::zeros(first.dim());
    for e in views {
        acc += e.vector();
    }
    acc /= views.len() as f64;
    Embedding::from_unnormalized(acc, "mean of view embeddings")
}

pub fn write_embeddings(path: &Path, rows: &[Embedding]) -> Result<()> {
    let dim = rows.first().map_or(0, Embedding::dim);
    if let Some(bad) = rows.iter().find(|e| e.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.dim(),
            context: "embedding dump".into(),
        });
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        w.write_all(EMBEDDINGS_MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        w.write_u32::<LittleEndian>(rows.len() as u32)?;
        w.write_u32::<LittleEndian>(dim as u32)?;
        for e in rows {
            for &x in e.vector() {
                w.write_f32::<LittleEndian>(x as f32)?;
            }
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Reads an embedding dump as raw rows (stored precision is f32).
pub fn read_embeddings(path: &Path) -> Result<Vec<Vec<f32>>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::BadFormat {
        path: path.to_path_buf(),
        message: m.to_string(),
    };
    if bytes.len() < 16 || &bytes[..4] != EMBEDDINGS_MAGIC {
        return Err(bad("missing VTRE header"));
    }
    let mut r = &bytes[4..];
    let version = r.read_u32::<LittleEndian>().unwrap();
    let count = r.read_u32::<LittleEndian>().unwrap() as usize;
    let dim = r.read_u32::<LittleEndian>().unwrap() as usize;
    if version != FORMAT_VERSION {
        return Err(bad("unsupported version"));
    }
    if r.len() != count * dim * 4 {
        return Err(bad("payload size does not match header"));
    }
    let mut flat = vec![0f32; count * dim];
    r.read_f32_into::<LittleEndian>(&mut flat).unwrap();
    Ok(flat
        .chunks(dim.max(1))
        .map(<[f32]>::to_vec)
        .take(count)
        .collect())
}

/// Head checkpoint: magic, version, dim_in, dim_out, bias flag, then row-major f64
/// weights and the bias if present.
pub fn write_head(path: &Path, head: &ProjectionHead) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        w.write_all(HEAD_MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        w.write_u32::<LittleEndian>(head.dim_in() as u32)?;
        w.write_u32::<LittleEndian>(head.dim_out() as u32)?;
        w.write_u32::<LittleEndian>(u32::from(head.bias.is_some()))?;
        for &x in head.weights.iter() {
            w.write_f64::<LittleEndian>(x)?;
        }
        for &x in head.bias.iter().flatten() {
            w.write_f64::<LittleEndian>(x)?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn read_head(path: &Path) -> Result<ProjectionHead> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::BadFormat {
        path: path.to_path_buf(),
        message: m.to_string(),
    };
    if bytes.len() < 20 || &bytes[..4] != HEAD_MAGIC {
        return Err(bad("missing VTRH header"));
    }
    let mut r = &bytes[4..];
    let version = r.read_u32::<LittleEndian>().unwrap();
    let dim_in = r.read_u32::<LittleEndian>().unwrap() as usize;
    let dim_out = r.read_u32::<LittleEndian>().unwrap() as usize;
    let has_bias = r.read_u32::<LittleEndian>().unwrap();
    if version != FORMAT_VERSION || has_bias > 1 {
        return Err(bad("unsupported version or flags"));
    }
    let n = dim_in * dim_out + if has_bias == 1 { dim_out } else { 0 };
    if r.len() != n * 8 {
        return Err(bad("payload size does not match header"));
    }
    let mut vals = vec![0f64; n];
    r.read_f64_into::<LittleEndian>(&mut vals).unwrap();
    let bias = (has_bias == 1).then(|| Array1::from(vals.split_off(dim_in * dim_out)));
    let weights =
        Array2::from_shape_vec((dim_in, dim_out), vals).map_err(|e| bad(&e.to_string()))?;
    ProjectionHead::new(weights, bias)
}
