//! Symmetric InfoNCE training of the projection heads.
//!
//! For a batch of `N` pairs with logits `s[i][j] = scale * cos(e_v[i], e_t[j])`:
//!
//! ```text
//! loss = -1/N sum_i log softmax_row(s)[i][i] - 1/N sum_i log softmax_col(s)[i][i]
//! dloss/ds[i][j] = ((p_row[i][j] - d_ij) + (p_col[i][j] - d_ij)) / N
//! ```
//!
//! Gradients flow back through the cosine, the unit normalization
//! (`(I - e e^T) / |u|`), optional view averaging and the linear heads. Updates use
//! AdamW with decoupled weight decay under a cosine learning-rate schedule.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::encode::{dot, Embedding, ProjectionHead, DEGENERATE_NORM};
use crate::hashing::Hash64;
use crate::simple::seeded_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    values: Array2<f64>,
    scale: f64,
}

impl SimilarityMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

/// `scale * cos(e_v[i], e_t[j])` for unit-norm embeddings.
pub fn similarity_matrix(
    videos: &[Embedding],
    texts: &[Embedding],
    scale: f64,
) -> Result<SimilarityMatrix> {
    if videos.len() != texts.len() {
        return Err(Error::DimensionMismatch {
            expected: videos.len(),
            actual: texts.len(),
            context: "similarity matrix counts".into(),
        });
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!(
            "logit scale must be positive, got {scale}"
        )));
    }
    let n = videos.len();
    let mut values = Array2::zeros((n, n));
    for (i, v) in videos.iter().enumerate() {
        for (j, t) in texts.iter().enumerate() {
            if v.dim() != t.dim() {
                return Err(Error::DimensionMismatch {
                    expected: v.dim(),
                    actual: t.dim(),
                    context: "embedding dimension".into(),
                });
            }
            values[[i, j]] = scale * v.dot(t);
        }
    }
    Ok(SimilarityMatrix { values, scale })
}

fn check_logits(s: ArrayView2<f64>) -> Result<usize> {
    let n = s.nrows();
    if n == 0 || s.ncols() != n {
        return Err(Error::invalid(format!(
            "logits must be square and non-empty, got {:?}",
            s.dim()
        )));
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("similarity logits".into()));
    }
    Ok(n)
}

/// Log-sum-exp with max subtraction.
fn logsumexp<'a>(xs: impl Iterator<Item = &'a f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    m + xs.map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Symmetric InfoNCE loss (video-to-text plus text-to-video) of a logit matrix.
pub fn info_nce_loss(s: ArrayView2<f64>) -> Result<f64> {
    let n = check_logits(s)?;
    let mut v2t = 0.0;
    let mut t2v = 0.0;
    for i in 0..n {
        v2t += logsumexp(s.row(i).iter()) - s[[i, i]];
        t2v += logsumexp(s.column(i).iter()) - s[[i, i]];
    }
    Ok((v2t + t2v) / n as f64)
}

/// Closed-form gradient of [`info_nce_loss`] with respect to every logit.
pub fn info_nce_grad(s: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = check_logits(s)?;
    let mut g = Array2::zeros((n, n));
    for i in 0..n {
        let lse = logsumexp(s.row(i).iter());
        for j in 0..n {
            g[[i, j]] += (s[[i, j]] - lse).exp();
        }
    }
    for j in 0..n {
        let lse = logsumexp(s.column(j).iter());
        for i in 0..n {
            g[[i, j]] += (s[[i, j]] - lse).exp();
        }
    }
    for i in 0..n {
        g[[i, i]] -= 2.0;
    }
    g /= n as f64;
    Ok(g)
}

/// One item as seen by a head: one feature vector per view (a single view under
/// input-level composition).
pub type Views = [Array1<f64>];

/// Gradient buffers shaped like a [`ProjectionHead`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrad {
    pub weights: Array2<f64>,
    pub bias: Option<Array1<f64>>,
}

impl HeadGrad {
    pub fn zeros_like(head: &ProjectionHead) -> Self {
        Self {
            weights: Array2::zeros(head.weights.raw_dim()),
            bias: head.bias.as_ref().map(|b| Array1::zeros(b.len())),
        }
    }
}

struct Forward {
    xs: Vec<Array1<f64>>,
    /// Unit-normalized projections per view, with pre-normalization norms.
    units: Vec<(Array1<f64>, f64)>,
    /// Norm of the mean of unit views (only used with more than one view).
    mean_norm: f64,
    embedding: Array1<f64>,
}

fn unit_with_norm(u: Array1<f64>, context: &str) -> Result<(Array1<f64>, f64)> {
    let n = dot(u.as_slice().unwrap(), u.as_slice().unwrap()).sqrt();
    if !n.is_finite() {
        return Err(Error::NonFinite(context.into()));
    }
    if n < DEGENERATE_NORM {
        return Err(Error::Degenerate {
            norm: n,
            context: context.into(),
        });
    }
    Ok((u / n, n))
}

fn forward(head: &ProjectionHead, views: &Views) -> Result<Forward> {
    if views.is_empty() {
        return Err(Error::invalid("item without views"));
    }
    let units = views
        .iter()
        .map(|x| unit_with_norm(head.project(x.view())?, "embedding"))
        .collect::<Result<Vec<_>>>()?;
    let (embedding, mean_norm) = if units.len() == 1 {
        (units[0].0.clone(), 1.0)
    } else {
        let mut m = Array1::zeros(head.dim_out());
        for (u, _) in &units {
            m += u;
        }
        m /= units.len() as f64;
        unit_with_norm(m, "mean of view embeddings")?
    };
    Ok(Forward {
        xs: views.to_vec(),
        units,
        mean_norm,
        embedding,
    })
}

/// Applies `(I - e e^T) g / norm`.
fn through_normalization(e: &Array1<f64>, g: &Array1<f64>, norm: f64) -> Array1<f64> {
    let proj = e.dot(g);
    (g - &(e * proj)) / norm
}

fn backward(fwd: &Forward, de: &Array1<f64>, grad: &mut HeadGrad) {
    let k = fwd.units.len();
    let d_mean = if k == 1 {
        de.clone()
    } else {
        through_normalization(&fwd.embedding, de, fwd.mean_norm) / k as f64
    };
    for (x, (unit, norm)) in fwd.xs.iter().zip(&fwd.units) {
        let du = through_normalization(unit, &d_mean, *norm);
        // d(W^T x)/dW: outer product x du^T.
        for (r, &xr) in x.iter().enumerate() {
            if xr != 0.0 {
                grad.weights.row_mut(r).scaled_add(xr, &du);
            }
        }
        if let Some(b) = grad.bias.as_mut() {
            *b += &du;
        }
    }
}

/// Embedding of an item: the single view's normalized projection, or the
/// renormalized mean of normalized view projections.
pub fn embed_views(head: &ProjectionHead, views: &Views) -> Result<Embedding> {
    Ok(Embedding::from_unit(forward(head, views)?.embedding))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchGrad {
    pub loss: f64,
    pub video: HeadGrad,
    pub text: HeadGrad,
}

/// Loss and exact gradients for both heads on one batch of paired items.
pub fn backprop_heads(
    videos: &[&Views],
    texts: &[&Views],
    video_head: &ProjectionHead,
    text_head: &ProjectionHead,
    scale: f64,
) -> Result<BatchGrad> {
    let n = videos.len();
    if n < 2 || texts.len() != n {
        return Err(Error::invalid(format!(
            "contrastive batch needs >= 2 pairs, got {n} videos / {} texts",
            texts.len()
        )));
    }
    let fv = videos
        .iter()
        .map(|v| forward(video_head, v))
        .collect::<Result<Vec<_>>>()?;
    let ft = texts
        .iter()
        .map(|t| forward(text_head, t))
        .collect::<Result<Vec<_>>>()?;
    if video_head.dim_out() != text_head.dim_out() {
        return Err(Error::DimensionMismatch {
            expected: video_head.dim_out(),
            actual: text_head.dim_out(),
            context: "head output dimensions".into(),
        });
    }
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            s[[i, j]] = scale
                * dot(
                    fv[i].embedding.as_slice().unwrap(),
                    ft[j].embedding.as_slice().unwrap(),
                );
        }
    }
    let loss = info_nce_loss(s.view())?;
    let g = info_nce_grad(s.view())? * scale;

    let ev = Array2::from_shape_fn((n, video_head.dim_out()), |(i, c)| fv[i].embedding[c]);
    let et = Array2::from_shape_fn((n, text_head.dim_out()), |(j, c)| ft[j].embedding[c]);
    let de_v = g.dot(&et);
    let de_t = g.t().dot(&ev);

    let mut video = HeadGrad::zeros_like(video_head);
    let mut text = HeadGrad::zeros_like(text_head);
    for i in 0..n {
        backward(&fv[i], &de_v.row(i).to_owned(), &mut video);
        backward(&ft[i], &de_t.row(i).to_owned(), &mut text);
    }
    Ok(BatchGrad { loss, video, text })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    /// Logit scale applied to cosine similarities; 1.0 is the untempered loss.
    pub scale: f64,
    pub seed: u64,
    pub warmup_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 32,
            base_lr: 1e-3,
            weight_decay: 0.2,
            betas: (0.9, 0.999),
            eps: 1e-8,
            scale: 20.0,
            seed: 0,
            warmup_steps: 0,
        }
    }
}

impl TrainConfig {
    /// Preset for long-video paragraph corpora (20 epochs).
    pub fn paragraph_preset() -> Self {
        Self {
            epochs: 20,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if self.batch_size < 2 {
            return fail("batch_size must be >= 2: the contrastive loss needs negatives".into());
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return fail(format!("base_lr must be positive, got {}", self.base_lr));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return fail(format!("scale must be positive, got {}", self.scale));
        }
        if !(0.0..1.0).contains(&self.betas.0) || !(0.0..1.0).contains(&self.betas.1) {
            return fail(format!("betas must lie in [0, 1), got {:?}", self.betas));
        }
        if !(self.weight_decay >= 0.0 && self.eps > 0.0) {
            return fail("weight_decay must be >= 0 and eps > 0".into());
        }
        Ok(())
    }
}

/// Adam moments for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWParams {
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub eps: f64,
}

impl From<&TrainConfig> for AdamWParams {
    fn from(c: &TrainConfig) -> Self {
        Self {
            weight_decay: c.weight_decay,
            betas: c.betas,
            eps: c.eps,
        }
    }
}

/// `theta -= lr * wd * theta + lr * m_hat / (sqrt(v_hat) + eps)`, both terms on the old theta.
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimizerState,
    lr: f64,
    p: &AdamWParams,
) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len()
    {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: grads.len(),
            context: "optimizer step".into(),
        });
    }
    if lr.is_nan() || lr < 0.0 {
        return Err(Error::invalid(format!("negative learning rate {lr}")));
    }
    state.step += 1;
    let (b1, b2) = p.betas;
    let t = state.step as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((theta, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *theta -= lr * p.weight_decay * *theta + lr * m_hat / (v_hat.sqrt() + p.eps);
    }
    Ok(())
}

/// Linear warmup to `base_lr`, then half-cosine decay to zero at `total_steps`.
pub fn cosine_lr(
    step: usize,
    total_steps: usize,
    base_lr: f64,
    warmup_steps: usize,
) -> Result<f64> {
    if step > total_steps || warmup_steps >= total_steps {
        return Err(Error::invalid(format!(
            "schedule step {step} outside 0..={total_steps} (warmup {warmup_steps})"
        )));
    }
    if step < warmup_steps {
        return Ok(base_lr * step as f64 / warmup_steps as f64);
    }
    let t = (step - warmup_steps) as f64 / (total_steps - warmup_steps) as f64;
    Ok(base_lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
}

/// Video and text projection heads trained together.
#[derive(Debug, Clone, PartialEq)]
pub struct Heads {
    pub video: ProjectionHead,
    pub text: ProjectionHead,
}

/// Precomputed per-view features of one training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingItem {
    pub video_views: Vec<Array1<f64>>,
    pub text_views: Vec<Array1<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

/// Shuffled batches for one epoch; a trailing batch is kept only if it has >= 2 pairs.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeded_rng(
        Hash64::new()
            .u64(seed)
            .str("epoch")
            .u64(epoch as u64)
            .finish(),
    );
    order.shuffle(&mut rng);
    order
        .chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect()
}

pub fn steps_per_epoch(n: usize, batch_size: usize) -> usize {
    n / batch_size + usize::from(n % batch_size >= 2)
}

struct HeadOptim {
    weights: OptimizerState,
    bias: Option<OptimizerState>,
}

impl HeadOptim {
    fn new(head: &ProjectionHead) -> Self {
        Self {
            weights: OptimizerState::new(head.weights.len()),
            bias: head.bias.as_ref().map(|b| OptimizerState::new(b.len())),
        }
    }

    fn step(
        &mut self,
        head: &mut ProjectionHead,
        grad: &HeadGrad,
        lr: f64,
        p: &AdamWParams,
    ) -> Result<()> {
        adamw_step(
            head.weights.as_slice_mut().expect("standard layout"),
            grad.weights.as_slice().expect("standard layout"),
            &mut self.weights,
            lr,
            p,
        )?;
        // Biases are not decayed.
        let no_decay = AdamWParams {
            weight_decay: 0.0,
            ..*p
        };
        if let (Some(b), Some(gb), Some(st)) =
            (head.bias.as_mut(), grad.bias.as_ref(), self.bias.as_mut())
        {
            adamw_step(
                b.as_slice_mut().unwrap(),
                gb.as_slice().unwrap(),
                st,
                lr,
                &no_decay,
            )?;
        }
        Ok(())
    }
}

/// Trains `heads` in place and returns the per-step loss trace.
pub fn train_run(
    items: &[TrainingItem],
    heads: &mut Heads,
    cfg: &TrainConfig,
) -> Result<Vec<TraceRecord>> {
    cfg.validate()?;
    if items.is_empty() {
        return Err(Error::invalid("no training pairs"));
    }
    if cfg.batch_size > items.len() {
        return Err(Error::invalid(format!(
            "batch_size {} exceeds {} training pairs",
            cfg.batch_size,
            items.len()
        )));
    }
    let total = cfg.epochs * steps_per_epoch(items.len(), cfg.batch_size);
    if cfg.warmup_steps >= total {
        return Err(Error::Config(format!(
            "warmup_steps {} must be below the {total} total steps",
            cfg.warmup_steps
        )));
    }
    let params = AdamWParams::from(cfg);
    let mut opt_v = HeadOptim::new(&heads.video);
    let mut opt_t = HeadOptim::new(&heads.text);
    let mut trace = Vec::with_capacity(total);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        for batch in epoch_batches(items.len(), cfg.batch_size, cfg.seed, epoch) {
            let videos: Vec<&Views> = batch
                .iter()
                .map(|&i| items[i].video_views.as_slice())
                .collect();
            let texts: Vec<&Views> = batch
                .iter()
                .map(|&i| items[i].text_views.as_slice())
                .collect();
            let g = backprop_heads(&videos, &texts, &heads.video, &heads.text, cfg.scale)
                .map_err(|e| Error::invalid(format!("step {step}: {e}")))?;
            if !g.loss.is_finite() {
                return Err(Error::NonFinite(format!("loss at step {step}")));
            }
            let lr = cosine_lr(step, total, cfg.base_lr, cfg.warmup_steps)?;
            opt_v.step(&mut heads.video, &g.video, lr, &params)?;
            opt_t.step(&mut heads.text, &g.text, lr, &params)?;
            if !heads.video.is_finite() || !heads.text.is_finite() {
                return Err(Error::NonFinite(format!(
                    "head parameters after step {step}"
                )));
            }
            trace.push(TraceRecord {
                step,
                lr,
                loss: g.loss,
            });
            step += 1;
        }
    }
    Ok(trace)
}

/// Mean loss over consecutive full batches in index order, without updating anything.
pub fn evaluate_loss(
    items: &[TrainingItem],
    heads: &Heads,
    batch_size: usize,
    scale: f64,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for chunk in items.chunks(batch_size).filter(|c| c.len() >= 2) {
        let videos: Vec<&Views> = chunk.iter().map(|it| it.video_views.as_slice()).collect();
        let texts: Vec<&Views> = chunk.iter().map(|it| it.text_views.as_slice()).collect();
        total += backprop_heads(&videos, &texts, &heads.video, &heads.text, scale)?.loss;
        count += 1;
    }
    if count == 0 {
        return Err(Error::invalid("no batch of >= 2 pairs to evaluate"));
    }
    Ok(total / count as f64)
}

/// Appends the trace as newline-delimited JSON records.
pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in trace {
        writeln!(w, "{}", serde_json::to_string(r).expect("trace serializes"))
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
