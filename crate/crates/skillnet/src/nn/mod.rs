//! Minimal neural-network building blocks with hand-written backward passes.
//!
//! Everything runs in `f64` so that analytic gradients can be checked against
//! central finite differences at tight tolerances. Layers own their weights
//! and accumulate gradients in-place; optimizers work on flattened parameter
//! vectors, which also keeps checkpoint serialization trivial.

mod adam;
mod conv;
mod linear;
mod spatial_softmax;

pub use adam::AdamState;
pub use conv::{relu4, relu4_backward, Conv2d};
pub use linear::Linear;
pub use spatial_softmax::{spatial_softmax_backward, spatial_softmax_forward};

use ndarray::{Array1, Array2};
use rand::Rng;

/// Uniform He-style initialization for a weight matrix of shape `rows x cols`
/// with `fan_in` inputs.
pub fn he_uniform<R: Rng>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Array2<f64> {
    let bound = (6.0 / fan_in as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

/// ReLU forward; returns the activated output.
pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// ReLU backward given the pre-activation input.
pub fn relu_backward(pre: &Array2<f64>, grad_out: &Array2<f64>) -> Array2<f64> {
    let mut g = grad_out.clone();
    g.zip_mut_with(pre, |gv, &p| {
        if p <= 0.0 {
            *gv = 0.0;
        }
    });
    g
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s: f64 = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

/// Backward through a row-wise softmax: given probabilities and dL/dprobs,
/// returns dL/dlogits.
pub fn softmax_rows_backward(probs: &Array2<f64>, grad_probs: &Array2<f64>) -> Array2<f64> {
    let mut grad = Array2::zeros(probs.raw_dim());
    for i in 0..probs.nrows() {
        let p = probs.row(i);
        let g = grad_probs.row(i);
        let dot: f64 = p.iter().zip(g.iter()).map(|(&pv, &gv)| pv * gv).sum();
        for c in 0..probs.ncols() {
            grad[[i, c]] = p[c] * (g[c] - dot);
        }
    }
    grad
}

/// Flattens a list of arrays into one parameter vector.
pub fn flatten_into(out: &mut Vec<f64>, arrays: &[&[f64]]) {
    for a in arrays {
        out.extend_from_slice(a);
    }
}

/// Splits `src` back into mutable slices, consuming exactly the lengths given.
pub fn unflatten_from<'a>(mut src: &'a [f64], targets: &mut [&mut [f64]]) -> &'a [f64] {
    for t in targets.iter_mut() {
        let (head, tail) = src.split_at(t.len());
        t.copy_from_slice(head);
        src = tail;
    }
    src
}

/// Zero-mean standard-normal draws via Box-Muller, seeded by the caller's rng.
pub fn standard_normal<R: Rng>(n: usize, rng: &mut R) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    })
}
