use ndarray::{Array2, Array4};

/// Per-channel softmax over the spatial grid followed by the expected (x, y)
/// image coordinate in [-1, 1]^2.
///
/// Input `N x C x H x W`, output `N x 2C` laid out as
/// `[x_0, y_0, x_1, y_1, ...]`. Also returns the softmax attention maps,
/// needed by the backward pass.
pub fn spatial_softmax_forward(x: &Array4<f64>) -> (Array2<f64>, Array4<f64>) {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let xs = coord_axis(w);
    let ys = coord_axis(h);
    let mut out = Array2::zeros((n, 2 * c));
    let mut probs = Array4::zeros(x.raw_dim());
    for ni in 0..n {
        for ci in 0..c {
            let chan = x.slice(ndarray::s![ni, ci, .., ..]);
            let m = chan.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut p = chan.mapv(|v| (v - m).exp());
            let s = p.sum();
            p.mapv_inplace(|v| v / s);
            let mut ex = 0.0;
            let mut ey = 0.0;
            for i in 0..h {
                for j in 0..w {
                    ex += p[[i, j]] * xs[j];
                    ey += p[[i, j]] * ys[i];
                }
            }
            out[[ni, 2 * ci]] = ex;
            out[[ni, 2 * ci + 1]] = ey;
            probs.slice_mut(ndarray::s![ni, ci, .., ..]).assign(&p);
        }
    }
    (out, probs)
}

/// dL/dx given the attention maps from the forward pass, the forward output,
/// and dL/d(output).
pub fn spatial_softmax_backward(
    probs: &Array4<f64>,
    out: &Array2<f64>,
    grad_out: &Array2<f64>,
) -> Array4<f64> {
    let (n, c, h, w) = (
        probs.shape()[0],
        probs.shape()[1],
        probs.shape()[2],
        probs.shape()[3],
    );
    let xs = coord_axis(w);
    let ys = coord_axis(h);
    let mut gx = Array4::zeros(probs.raw_dim());
    for ni in 0..n {
        for ci in 0..c {
            let ex = out[[ni, 2 * ci]];
            let ey = out[[ni, 2 * ci + 1]];
            let gex = grad_out[[ni, 2 * ci]];
            let gey = grad_out[[ni, 2 * ci + 1]];
            for i in 0..h {
                for j in 0..w {
                    let p = probs[[ni, ci, i, j]];
                    // d E[coord] / d activation = p * (coord - E[coord])
                    gx[[ni, ci, i, j]] = p * ((xs[j] - ex) * gex + (ys[i] - ey) * gey);
                }
            }
        }
    }
    gx
}

fn coord_axis(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![0.0];
    }
    (0..len)
        .map(|i| -1.0 + 2.0 * i as f64 / (len - 1) as f64)
        .collect()
}
