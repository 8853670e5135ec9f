//! Deterministic exact t-SNE for small frame sets, with PCA initialization.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Projects `F x d` data to `F x 2`. Exact O(F^2) gradients, PCA-initialized
/// and seeded, so the output is a pure function of `(data, perplexity, seed)`.
pub fn tsne(data: &Array2<f64>, perplexity: f64, iters: usize, seed: u64) -> Array2<f64> {
    let f = data.nrows();
    assert!(f >= 2, "t-SNE needs at least two points");
    // effective perplexity must stay below the neighbor count
    let perplexity = perplexity.min((f as f64 - 1.0) / 3.0).max(1.0);
    let d2 = pairwise_sq_dists(data);
    let p = joint_probabilities(&d2, perplexity);

    let mut y = pca_2d(data);
    // tiny seeded jitter breaks exact ties (duplicate input rows)
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in y.iter_mut() {
        *v += rng.gen_range(-1e-6..1e-6);
    }
    // scale init down so early exaggeration can arrange the layout
    let scale = y.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-12);
    y.mapv_inplace(|v| v / scale * 1e-2);

    let lr = 100.0;
    let exaggeration_until = iters / 3;
    let mut vel: Array2<f64> = Array2::zeros((f, 2));
    for it in 0..iters {
        let exo = if it < exaggeration_until { 4.0 } else { 1.0 };
        let momentum = if it < iters / 2 { 0.5 } else { 0.8 };
        // low-dimensional affinities under the Student-t kernel
        let mut num = Array2::zeros((f, f));
        let mut z = 0.0;
        for i in 0..f {
            for j in 0..f {
                if i == j {
                    continue;
                }
                let dx = y[[i, 0]] - y[[j, 0]];
                let dy = y[[i, 1]] - y[[j, 1]];
                let v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[[i, j]] = v;
                z += v;
            }
        }
        let mut grad: Array2<f64> = Array2::zeros((f, 2));
        for i in 0..f {
            for j in 0..f {
                if i == j {
                    continue;
                }
                let q = (num[[i, j]] / z).max(1e-12);
                let mult = (exo * p[[i, j]] - q) * num[[i, j]];
                grad[[i, 0]] += 4.0 * mult * (y[[i, 0]] - y[[j, 0]]);
                grad[[i, 1]] += 4.0 * mult * (y[[i, 1]] - y[[j, 1]]);
            }
        }
        for i in 0..f {
            for c in 0..2 {
                vel[[i, c]] = momentum * vel[[i, c]] - lr * grad[[i, c]];
                y[[i, c]] += vel[[i, c]];
            }
        }
        // re-center
        for c in 0..2 {
            let mean = y.column(c).sum() / f as f64;
            for i in 0..f {
                y[[i, c]] -= mean;
            }
        }
    }
    y
}

fn pairwise_sq_dists(data: &Array2<f64>) -> Array2<f64> {
    let f = data.nrows();
    let mut out = Array2::zeros((f, f));
    for i in 0..f {
        for j in (i + 1)..f {
            let d = &data.row(i) - &data.row(j);
            let v = d.dot(&d);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// Symmetrized joint probabilities with per-point bandwidths found by binary
/// search on the target perplexity.
fn joint_probabilities(d2: &Array2<f64>, perplexity: f64) -> Array2<f64> {
    let f = d2.nrows();
    let target = perplexity.ln();
    let mut p = Array2::zeros((f, f));
    for i in 0..f {
        let mut beta = 1.0;
        let mut beta_min = f64::NEG_INFINITY;
        let mut beta_max = f64::INFINITY;
        for _ in 0..60 {
            let (h, row) = row_entropy(d2, i, beta);
            if (h - target).abs() < 1e-6 {
                for j in 0..f {
                    p[[i, j]] = row[j];
                }
                break;
            }
            if h > target {
                beta_min = beta;
                beta = if beta_max.is_finite() {
                    (beta + beta_max) / 2.0
                } else {
                    beta * 2.0
                };
            } else {
                beta_max = beta;
                beta = if beta_min.is_finite() {
                    (beta + beta_min) / 2.0
                } else {
                    beta / 2.0
                };
            }
            for j in 0..f {
                p[[i, j]] = row[j];
            }
        }
    }
    // symmetrize and normalize
    let mut joint = Array2::zeros((f, f));
    let mut total = 0.0;
    for i in 0..f {
        for j in 0..f {
            let v = (p[[i, j]] + p[[j, i]]) / 2.0;
            joint[[i, j]] = v;
            total += v;
        }
    }
    joint.mapv_inplace(|v| (v / total).max(1e-12));
    for i in 0..f {
        joint[[i, i]] = 0.0;
    }
    joint
}

fn row_entropy(d2: &Array2<f64>, i: usize, beta: f64) -> (f64, Vec<f64>) {
    let f = d2.nrows();
    let mut row = vec![0.0; f];
    let mut sum = 0.0;
    for j in 0..f {
        if j != i {
            let v = (-beta * d2[[i, j]]).exp();
            row[j] = v;
            sum += v;
        }
    }
    if sum <= 0.0 {
        return (0.0, row);
    }
    let mut h = 0.0;
    for j in 0..f {
        row[j] /= sum;
        if row[j] > 0.0 {
            h -= row[j] * row[j].ln();
        }
    }
    (h, row)
}

/// Top-2 principal component projection via deflated power iteration.
fn pca_2d(data: &Array2<f64>) -> Array2<f64> {
    let f = data.nrows();
    let d = data.ncols();
    let mean = data.mean_axis(ndarray::Axis(0)).unwrap();
    let centered = data - &mean;
    let mut cov = centered.t().dot(&centered) / f as f64;
    let mut out = Array2::zeros((f, 2));
    for c in 0..2 {
        let mut v: Array1<f64> = Array1::from_shape_fn(d, |i| 1.0 + (i as f64) * 0.01);
        let norm = v.dot(&v).sqrt();
        v.mapv_inplace(|x| x / norm);
        for _ in 0..200 {
            let mut w = cov.dot(&v);
            let n = w.dot(&w).sqrt();
            if n < 1e-15 {
                break;
            }
            w.mapv_inplace(|x| x / n);
            v = w;
        }
        let lambda = v.dot(&cov.dot(&v));
        out.column_mut(c).assign(&centered.dot(&v));
        // deflate
        let outer = Array2::from_shape_fn((d, d), |(i, j)| v[i] * v[j]);
        cov = &cov - &(outer * lambda);
    }
    out
}
