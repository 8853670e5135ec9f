use ndarray::{Array1, Array2, Array4, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// 2D convolution over `N x C x H x W` batches, implemented as im2col + gemm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv2d {
    /// `out_c x (in_c * k * k)`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    #[serde(skip)]
    pub gw: Array2<f64>,
    #[serde(skip)]
    pub gb: Array1<f64>,
}

impl Conv2d {
    pub fn new<R: Rng>(in_c: usize, out_c: usize, kernel: usize, stride: usize, rng: &mut R) -> Self {
        let fan_in = in_c * kernel * kernel;
        let w = super::he_uniform(out_c, fan_in, fan_in, rng);
        Self {
            gw: Array2::zeros(w.raw_dim()),
            gb: Array1::zeros(out_c),
            w,
            b: Array1::zeros(out_c),
            in_c,
            out_c,
            kernel,
            stride,
            pad: kernel / 2,
        }
    }

    pub fn out_size(&self, input: usize) -> usize {
        (input + 2 * self.pad - self.kernel) / self.stride + 1
    }

    fn im2col(&self, x: &ndarray::ArrayView3<f64>) -> Array2<f64> {
        let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        debug_assert_eq!(c, self.in_c);
        let oh = self.out_size(h);
        let ow = self.out_size(w);
        let k = self.kernel;
        let mut cols = Array2::zeros((c * k * k, oh * ow));
        for ci in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            cols[[row, oy * ow + ox]] = x[[ci, iy as usize, ix as usize]];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &Array2<f64>, h: usize, w: usize) -> ndarray::Array3<f64> {
        let oh = self.out_size(h);
        let ow = self.out_size(w);
        let k = self.kernel;
        let mut x = ndarray::Array3::zeros((self.in_c, h, w));
        for ci in 0..self.in_c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            x[[ci, iy as usize, ix as usize]] += cols[[row, oy * ow + ox]];
                        }
                    }
                }
            }
        }
        x
    }

    /// `x`: N x in_c x H x W -> N x out_c x OH x OW.
    pub fn forward(&self, x: &Array4<f64>) -> Array4<f64> {
        let (n, _, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let oh = self.out_size(h);
        let ow = self.out_size(w);
        let mut y = Array4::zeros((n, self.out_c, oh, ow));
        for i in 0..n {
            let cols = self.im2col(&x.index_axis(Axis(0), i));
            let mut out = self.w.dot(&cols);
            for (mut row, &bv) in out.rows_mut().into_iter().zip(self.b.iter()) {
                row += bv;
            }
            y.index_axis_mut(Axis(0), i)
                .assign(&out.into_shape_with_order((self.out_c, oh, ow)).unwrap());
        }
        y
    }

    /// Accumulates weight gradients and returns dL/dx.
    pub fn backward(&mut self, x: &Array4<f64>, grad_out: &Array4<f64>) -> Array4<f64> {
        let (n, _, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let oh = self.out_size(h);
        let ow = self.out_size(w);
        let mut gx = Array4::zeros(x.raw_dim());
        for i in 0..n {
            let cols = self.im2col(&x.index_axis(Axis(0), i));
            let go = grad_out
                .index_axis(Axis(0), i)
                .to_owned()
                .into_shape_with_order((self.out_c, oh * ow))
                .unwrap();
            self.gw += &go.dot(&cols.t());
            self.gb += &go.sum_axis(Axis(1));
            let gcols = self.w.t().dot(&go);
            gx.index_axis_mut(Axis(0), i)
                .assign(&self.col2im(&gcols, h, w));
        }
        gx
    }

    pub fn zero_grad(&mut self) {
        self.gw.fill(0.0);
        self.gb.fill(0.0);
    }

    pub fn num_params(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn ensure_grad_buffers(&mut self) {
        if self.gw.raw_dim() != self.w.raw_dim() {
            self.gw = Array2::zeros(self.w.raw_dim());
        }
        if self.gb.len() != self.b.len() {
            self.gb = Array1::zeros(self.b.len());
        }
    }
}

/// ReLU over a 4D activation map.
pub fn relu4(x: &Array4<f64>) -> Array4<f64> {
    x.mapv(|v| v.max(0.0))
}

pub fn relu4_backward(pre: &Array4<f64>, grad_out: &Array4<f64>) -> Array4<f64> {
    let mut g = grad_out.clone();
    g.zip_mut_with(pre, |gv, &p| {
        if p <= 0.0 {
            *gv = 0.0;
        }
    });
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_kernel_preserves_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut conv = Conv2d::new(1, 1, 3, 1, &mut rng);
        conv.w.fill(0.0);
        conv.w[[0, 4]] = 1.0; // center tap
        conv.b.fill(0.0);
        let x = Array4::from_shape_fn((1, 1, 5, 5), |(_, _, i, j)| (i * 5 + j) as f64);
        let y = conv.forward(&x);
        assert_eq!(y, x);
    }

    #[test]
    fn gradients_match_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut conv = Conv2d::new(2, 3, 3, 2, &mut rng);
        let x = Array4::from_shape_fn((2, 2, 6, 6), |(n, c, i, j)| {
            ((n + c) as f64 * 0.3) + (i as f64 - j as f64) * 0.11
        });
        let y = conv.forward(&x);
        let gout = Array4::ones(y.raw_dim());
        let gx = conv.backward(&x, &gout);
        let eps = 1e-6;
        // input gradient, spot check
        for &(n, c, i, j) in &[(0, 0, 0, 0), (1, 1, 3, 2), (0, 1, 5, 5), (1, 0, 2, 4)] {
            let mut xp = x.clone();
            xp[[n, c, i, j]] += eps;
            let mut xm = x.clone();
            xm[[n, c, i, j]] -= eps;
            let fd = (conv.forward(&xp).sum() - conv.forward(&xm).sum()) / (2.0 * eps);
            assert!((gx[[n, c, i, j]] - fd).abs() < 1e-7);
        }
        // weight gradient, spot check
        for &(r, c) in &[(0, 0), (2, 17), (1, 9)] {
            let orig = conv.w[[r, c]];
            conv.w[[r, c]] = orig + eps;
            let fp = conv.forward(&x).sum();
            conv.w[[r, c]] = orig - eps;
            let fm = conv.forward(&x).sum();
            conv.w[[r, c]] = orig;
            let fd = (fp - fm) / (2.0 * eps);
            assert!((conv.gw[[r, c]] - fd).abs() < 1e-6);
        }
    }
}
