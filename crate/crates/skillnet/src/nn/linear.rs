use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fully-connected layer `y = x W^T + b` over row-major batches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear {
    /// `out_dim x in_dim`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    #[serde(skip)]
    pub gw: Array2<f64>,
    #[serde(skip)]
    pub gb: Array1<f64>,
}

impl Linear {
    pub fn new<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let w = super::he_uniform(out_dim, in_dim, in_dim, rng);
        Self {
            gw: Array2::zeros(w.raw_dim()),
            gb: Array1::zeros(out_dim),
            w,
            b: Array1::zeros(out_dim),
        }
    }

    /// Layer with all weights and biases zero (used for heads whose initial
    /// output must be exactly zero).
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            w: Array2::zeros((out_dim, in_dim)),
            b: Array1::zeros(out_dim),
            gw: Array2::zeros((out_dim, in_dim)),
            gb: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    /// `x`: batch x in_dim -> batch x out_dim.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.w.t());
        y += &self.b;
        y
    }

    /// Accumulates weight gradients and returns dL/dx.
    pub fn backward(&mut self, x: &Array2<f64>, grad_out: &Array2<f64>) -> Array2<f64> {
        self.gw += &grad_out.t().dot(x);
        self.gb += &grad_out.sum_axis(ndarray::Axis(0));
        grad_out.dot(&self.w)
    }

    pub fn zero_grad(&mut self) {
        self.gw.fill(0.0);
        self.gb.fill(0.0);
    }

    pub fn num_params(&self) -> usize {
        self.w.len() + self.b.len()
    }

    /// Restores gradient buffers after deserialization (serde skips them).
    pub fn ensure_grad_buffers(&mut self) {
        if self.gw.raw_dim() != self.w.raw_dim() {
            self.gw = Array2::zeros(self.w.raw_dim());
        }
        if self.gb.len() != self.b.len() {
            self.gb = Array1::zeros(self.b.len());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_matches_manual() {
        let mut l = Linear::zeros(2, 2);
        l.w = array![[1.0, 2.0], [3.0, 4.0]];
        l.b = array![0.5, -0.5];
        let y = l.forward(&array![[1.0, 1.0]]);
        assert_eq!(y, array![[3.5, 6.5]]);
    }

    #[test]
    fn backward_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut l = Linear::new(3, 2, &mut rng);
        let x = array![[0.1, -0.2, 0.3], [1.0, 0.5, -0.7]];
        // loss = sum of outputs
        let ones = Array2::ones((2, 2));
        let gx = l.backward(&x, &ones);
        let eps = 1e-6;
        for i in 0..2 {
            for j in 0..3 {
                let mut xp = x.clone();
                xp[[i, j]] += eps;
                let mut xm = x.clone();
                xm[[i, j]] -= eps;
                let fd = (l.forward(&xp).sum() - l.forward(&xm).sum()) / (2.0 * eps);
                assert!((gx[[i, j]] - fd).abs() < 1e-8);
            }
        }
        // weight grad
        for r in 0..2 {
            for c in 0..3 {
                let orig = l.w[[r, c]];
                l.w[[r, c]] = orig + eps;
                let fp = l.forward(&x).sum();
                l.w[[r, c]] = orig - eps;
                let fm = l.forward(&x).sum();
                l.w[[r, c]] = orig;
                let fd = (fp - fm) / (2.0 * eps);
                assert!((l.gw[[r, c]] - fd).abs() < 1e-8);
            }
        }
    }
}
