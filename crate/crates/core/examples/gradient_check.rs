//! Compare analytic gradients with central finite differences.
//!
//! Run with `cargo run --example gradient_check`.

use auglab::encode::ProjectionHead;
use auglab::train::{backprop_heads, info_nce_grad, info_nce_loss};
use ndarray::{Array1, Array2};
use rand::Rng;

const H: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn main() -> auglab::Result<()> {
    let mut rng = auglab::simple::seeded_rng(5);

    let n = 5;
    let s = Array2::from_shape_fn((n, n), |_| rng.random_range(-3.0..3.0));
    let g = info_nce_grad(s.view())?;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (mut p, mut m) = (s.clone(), s.clone());
            p[[i, j]] += H;
            m[[i, j]] -= H;
            let fd = (info_nce_loss(p.view())? - info_nce_loss(m.view())?) / (2.0 * H);
            worst = worst.max(rel_err(g[[i, j]], fd));
        }
    }
    println!("dL/dS: worst relative error {worst:.2e}");

    // Two views per item exercises the mean-of-views path.
    let (d_v, d_t, d_out) = (6, 9, 4);
    let vh = ProjectionHead::random(d_v, d_out, true, 1)?;
    let th = ProjectionHead::random(d_t, d_out, false, 2)?;
    let views = |d: usize, rng: &mut _| -> Vec<Array1<f64>> {
        (0..2)
            .map(|_| Array1::from_shape_fn(d, |_| Rng::random_range(rng, -1.0..1.0)))
            .collect()
    };
    let videos: Vec<_> = (0..n).map(|_| views(d_v, &mut rng)).collect();
    let texts: Vec<_> = (0..n).map(|_| views(d_t, &mut rng)).collect();
    let vr: Vec<&[Array1<f64>]> = videos.iter().map(Vec::as_slice).collect();
    let tr: Vec<&[Array1<f64>]> = texts.iter().map(Vec::as_slice).collect();
    let scale = 5.0;
    let grad = backprop_heads(&vr, &tr, &vh, &th, scale)?;

    let mut worst: f64 = 0.0;
    for idx in 0..vh.weights.len() {
        let (r, c) = (idx / d_out, idx % d_out);
        let mut p = vh.clone();
        let mut m = vh.clone();
        p.weights[[r, c]] += H;
        m.weights[[r, c]] -= H;
        let fd = (backprop_heads(&vr, &tr, &p, &th, scale)?.loss
            - backprop_heads(&vr, &tr, &m, &th, scale)?.loss)
            / (2.0 * H);
        worst = worst.max(rel_err(grad.video.weights[[r, c]], fd));
    }
    println!("dL/dW_video: worst relative error {worst:.2e}");
    Ok(())
}
