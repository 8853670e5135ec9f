//! Training-only discriminator `D`: concatenated skill embeddings go through
//! a latent Gaussian (reparameterized) into a task-class distribution.
//!
//! The latent path can be switched to a plain fully-connected layer for the
//! no-KL ablation. Dropout is active only in training mode, and the whole
//! network is deterministic once the latent noise is fixed.

use crate::nn::{relu, relu_backward, softmax_rows, softmax_rows_backward, Linear};
use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentKind {
    /// Gaussian latent with reparameterized sampling and a KL regularizer.
    Kl,
    /// Plain fully-connected latent, no sampling, no KL.
    Fc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorConfig {
    pub latent: LatentKind,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    /// Number of task classes C. Decoupled from the dataset's task count.
    pub num_classes: usize,
    /// Input width: num_domain_frames * embedding_dim.
    pub input_dim: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            latent: LatentKind::Kl,
            latent_dim: 64,
            hidden_dim: 128,
            dropout: 0.3,
            num_classes: 2,
            input_dim: 64,
        }
    }
}

/// Diagonal Gaussian over the latent. Sigma is derived from a log-variance
/// output, so it is positive by construction.
#[derive(Debug, Clone)]
pub struct LatentGaussian {
    pub mu: Array1<f64>,
    pub sigma: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct TaskDistribution {
    pub probs: Array1<f64>,
}

/// `z = mu + sigma (*) epsilon`, elementwise.
pub fn sample_latent(g: &LatentGaussian, epsilon: &Array1<f64>) -> Array1<f64> {
    &g.mu + &(&g.sigma * epsilon)
}

/// Closed-form KL of a diagonal Gaussian against the standard normal:
/// `0.5 * sum(mu^2 + sigma^2 - log sigma^2 - 1)`.
pub fn kl_to_standard_normal(g: &LatentGaussian) -> f64 {
    g.mu.iter()
        .zip(g.sigma.iter())
        .map(|(&m, &s)| 0.5 * (m * m + s * s - (s * s).ln() - 1.0))
        .sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Discriminator {
    pub config: DiscriminatorConfig,
    fc_in: Linear,
    mu_head: Linear,
    logvar_head: Linear,
    fc_hidden: Linear,
    fc_out: Linear,
}

/// Activations saved by the cached forward pass.
pub struct DiscriminatorCache {
    input: Array2<f64>,
    h1_pre: Array2<f64>,
    h1: Array2<f64>,
    pub mu: Array2<f64>,
    pub logvar: Array2<f64>,
    epsilon: Option<Array2<f64>>,
    z: Array2<f64>,
    h2_pre: Array2<f64>,
    h2_dropped: Array2<f64>,
    dropout_mask: Option<Array2<f64>>,
    pub probs: Array2<f64>,
}

impl DiscriminatorCache {
    /// Mean KL over the batch (0 in FC mode).
    pub fn mean_kl(&self) -> f64 {
        if self.epsilon.is_none() {
            return 0.0;
        }
        let n = self.mu.nrows() as f64;
        let mut total = 0.0;
        for i in 0..self.mu.nrows() {
            for j in 0..self.mu.ncols() {
                let m = self.mu[[i, j]];
                let lv = self.logvar[[i, j]];
                total += 0.5 * (m * m + lv.exp() - lv - 1.0);
            }
        }
        total / n
    }
}

impl Discriminator {
    pub fn new<R: Rng>(config: DiscriminatorConfig, rng: &mut R) -> Self {
        let fc_in = Linear::new(config.input_dim, config.hidden_dim, rng);
        // zero-initialized latent heads: mu = 0, log-variance = 0, so the
        // latent starts exactly standard normal
        let mu_head = Linear::zeros(config.hidden_dim, config.latent_dim);
        let logvar_head = Linear::zeros(config.hidden_dim, config.latent_dim);
        let fc_hidden = Linear::new(config.latent_dim, config.hidden_dim, rng);
        // near-uniform output: an exactly uniform softmax is a saddle of the
        // batch-entropy objective with zero gradient, so the output head gets
        // a small random init instead of zeros
        let mut fc_out = Linear::new(config.hidden_dim, config.num_classes, rng);
        fc_out.w.mapv_inplace(|v| v * 0.01);
        Self {
            config,
            fc_in,
            mu_head,
            logvar_head,
            fc_hidden,
            fc_out,
        }
    }

    /// Latent Gaussian for a single skill embedding.
    pub fn encode_latent(&self, skill: &Array1<f64>) -> LatentGaussian {
        assert_eq!(
            skill.len(),
            self.config.input_dim,
            "skill embedding length mismatch"
        );
        let x = skill.clone().insert_axis(ndarray::Axis(0));
        let h1 = relu(&self.fc_in.forward(&x));
        let mu = self.mu_head.forward(&h1).row(0).to_owned();
        let logvar = self.logvar_head.forward(&h1).row(0).to_owned();
        LatentGaussian {
            mu,
            sigma: logvar.mapv(|v| (0.5 * v).exp()),
        }
    }

    /// Task distribution for a latent sample (inference mode, no dropout).
    pub fn classify(&self, z: &Array1<f64>) -> TaskDistribution {
        assert_eq!(z.len(), self.config.latent_dim);
        let zb = z.clone().insert_axis(ndarray::Axis(0));
        let h2 = relu(&self.fc_hidden.forward(&zb));
        let probs = softmax_rows(&self.fc_out.forward(&h2));
        TaskDistribution {
            probs: probs.row(0).to_owned(),
        }
    }

    /// Full batch forward. `epsilon` must be `N x latent_dim` standard-normal
    /// draws in KL mode (ignored in FC mode). `dropout_rng` enables dropout
    /// (training mode); `None` disables it.
    pub fn forward_cached<R: Rng>(
        &self,
        input: &Array2<f64>,
        epsilon: Option<&Array2<f64>>,
        dropout_rng: Option<&mut R>,
    ) -> DiscriminatorCache {
        assert_eq!(input.ncols(), self.config.input_dim, "skill length mismatch");
        let h1_pre = self.fc_in.forward(input);
        let h1 = relu(&h1_pre);
        let mu = self.mu_head.forward(&h1);
        let logvar = self.logvar_head.forward(&h1);
        let (z, eps_cached) = match self.config.latent {
            LatentKind::Kl => {
                let eps = epsilon.expect("KL latent requires epsilon draws").clone();
                assert_eq!(eps.raw_dim(), mu.raw_dim());
                let sigma = logvar.mapv(|v| (0.5 * v).exp());
                (&mu + &(&sigma * &eps), Some(eps))
            }
            LatentKind::Fc => (mu.clone(), None),
        };
        let h2_pre = self.fc_hidden.forward(&z);
        let h2 = relu(&h2_pre);
        let (h2_dropped, dropout_mask) = match dropout_rng {
            Some(rng) if self.config.dropout > 0.0 => {
                let keep = 1.0 - self.config.dropout;
                let mask = Array2::from_shape_fn(h2.raw_dim(), |_| {
                    if rng.gen_bool(keep) {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                (&h2 * &mask, Some(mask))
            }
            _ => (h2, None),
        };
        let probs = softmax_rows(&self.fc_out.forward(&h2_dropped));
        DiscriminatorCache {
            input: input.clone(),
            h1_pre,
            h1,
            mu,
            logvar,
            epsilon: eps_cached,
            z,
            h2_pre,
            h2_dropped,
            dropout_mask,
            probs,
        }
    }

    /// Backward from dL/dprobs, plus `kl_weight` times the gradient of the
    /// batch-mean KL. Accumulates weight gradients and returns dL/d(input),
    /// which carries the adversarial signal back into the encoder.
    pub fn backward(
        &mut self,
        cache: &DiscriminatorCache,
        grad_probs: &Array2<f64>,
        kl_weight: f64,
    ) -> Array2<f64> {
        let g_logits = softmax_rows_backward(&cache.probs, grad_probs);
        let g_h2_dropped = self.fc_out.backward(&cache.h2_dropped, &g_logits);
        let g_h2 = match &cache.dropout_mask {
            Some(mask) => &g_h2_dropped * mask,
            None => g_h2_dropped,
        };
        let g_h2_pre = relu_backward(&cache.h2_pre, &g_h2);
        let g_z = self.fc_hidden.backward(&cache.z, &g_h2_pre);

        let n = cache.mu.nrows() as f64;
        let (mut g_mu, g_logvar) = match (&cache.epsilon, self.config.latent) {
            (Some(eps), LatentKind::Kl) => {
                // z = mu + exp(logvar/2) (*) eps
                let sigma = cache.logvar.mapv(|v| (0.5 * v).exp());
                let g_logvar_z = 0.5 * &(&g_z * eps) * &sigma;
                (g_z.clone(), g_logvar_z)
            }
            _ => (g_z.clone(), Array2::zeros(cache.mu.raw_dim())),
        };
        let mut g_logvar = g_logvar;
        if kl_weight != 0.0 && cache.epsilon.is_some() {
            // d(mean KL)/dmu = mu / N ; d(mean KL)/dlogvar = (exp(logvar)-1)/(2N)
            g_mu = g_mu + cache.mu.mapv(|m| kl_weight * m / n);
            g_logvar = g_logvar + cache.logvar.mapv(|lv| kl_weight * 0.5 * (lv.exp() - 1.0) / n);
        }
        let g_h1_a = self.mu_head.backward(&cache.h1, &g_mu);
        let g_h1_b = self.logvar_head.backward(&cache.h1, &g_logvar);
        let g_h1 = g_h1_a + g_h1_b;
        let g_h1_pre = relu_backward(&cache.h1_pre, &g_h1);
        self.fc_in.backward(&cache.input, &g_h1_pre)
    }

    pub fn zero_grad(&mut self) {
        for l in [
            &mut self.fc_in,
            &mut self.mu_head,
            &mut self.logvar_head,
            &mut self.fc_hidden,
            &mut self.fc_out,
        ] {
            l.zero_grad();
        }
    }

    fn layers(&self) -> [&Linear; 5] {
        [
            &self.fc_in,
            &self.mu_head,
            &self.logvar_head,
            &self.fc_hidden,
            &self.fc_out,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|l| l.num_params()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in self.layers() {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn grads_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in self.layers() {
            out.extend(l.gw.iter());
            out.extend(l.gb.iter());
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut offset = 0;
        for l in [
            &mut self.fc_in,
            &mut self.mu_head,
            &mut self.logvar_head,
            &mut self.fc_hidden,
            &mut self.fc_out,
        ] {
            let wlen = l.w.len();
            l.w.as_slice_mut()
                .unwrap()
                .copy_from_slice(&flat[offset..offset + wlen]);
            offset += wlen;
            let blen = l.b.len();
            l.b.as_slice_mut()
                .unwrap()
                .copy_from_slice(&flat[offset..offset + blen]);
            offset += blen;
        }
    }

    pub fn ensure_grad_buffers(&mut self) {
        for l in [
            &mut self.fc_in,
            &mut self.mu_head,
            &mut self.logvar_head,
            &mut self.fc_hidden,
            &mut self.fc_out,
        ] {
            l.ensure_grad_buffers();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn disc(seed: u64) -> Discriminator {
        let cfg = DiscriminatorConfig {
            input_dim: 8,
            latent_dim: 4,
            hidden_dim: 16,
            num_classes: 4,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Discriminator::new(cfg, &mut rng)
    }

    #[test]
    fn zero_init_gives_standard_latent() {
        let d = disc(0);
        let g = d.encode_latent(&Array1::zeros(8));
        assert!(g.mu.iter().all(|&m| m == 0.0));
        assert!(g.sigma.iter().all(|&s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn sigma_strictly_positive() {
        let d = disc(1);
        let g = d.encode_latent(&Array1::from_elem(8, 3.7));
        assert!(g.sigma.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn encode_latent_deterministic() {
        let d = disc(2);
        let x = Array1::from_shape_fn(8, |i| i as f64 * 0.3 - 1.0);
        let a = d.encode_latent(&x);
        let b = d.encode_latent(&x);
        assert_eq!(a.mu, b.mu);
        assert_eq!(a.sigma, b.sigma);
    }

    #[test]
    fn sample_latent_arithmetic() {
        let g = LatentGaussian {
            mu: array![1.0, 2.0],
            sigma: array![0.5, 2.0],
        };
        let z = sample_latent(&g, &array![2.0, -1.0]);
        assert_eq!(z, array![2.0, 0.0]);
        let z0 = sample_latent(&g, &Array1::zeros(2));
        assert_eq!(z0, g.mu);
        let std = LatentGaussian {
            mu: Array1::zeros(2),
            sigma: Array1::ones(2),
        };
        let eps = array![0.3, -0.7];
        assert_eq!(sample_latent(&std, &eps), eps);
    }

    #[test]
    fn kl_closed_form_values() {
        let std = LatentGaussian {
            mu: Array1::zeros(3),
            sigma: Array1::ones(3),
        };
        assert!(kl_to_standard_normal(&std).abs() < 1e-12);
        let g = LatentGaussian {
            mu: array![1.0],
            sigma: array![1.0],
        };
        assert!((kl_to_standard_normal(&g) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kl_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let g = LatentGaussian {
                mu: Array1::from_shape_fn(5, |_| rng.gen_range(-3.0..3.0)),
                sigma: Array1::from_shape_fn(5, |_| rng.gen_range(0.05..4.0)),
            };
            assert!(kl_to_standard_normal(&g) >= -1e-12);
        }
    }

    #[test]
    fn kl_closed_form_matches_numerical_integration() {
        // 1-D case: KL(N(mu, s^2) || N(0,1)) by quadrature over the density
        let cases = [(0.7, 1.3), (-1.2, 0.5), (0.0, 2.0)];
        for &(mu, s) in &cases {
            let g = LatentGaussian {
                mu: array![mu],
                sigma: array![s],
            };
            let closed = kl_to_standard_normal(&g);
            let mut numeric = 0.0;
            let steps = 40_000;
            let lo = mu - 12.0 * s;
            let hi = mu + 12.0 * s;
            let dx = (hi - lo) / steps as f64;
            for i in 0..steps {
                let x = lo + (i as f64 + 0.5) * dx;
                let p = (-((x - mu) * (x - mu)) / (2.0 * s * s)).exp()
                    / (s * (2.0 * std::f64::consts::PI).sqrt());
                let q = (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
                if p > 0.0 {
                    numeric += p * (p / q).ln() * dx;
                }
            }
            let rel = (closed - numeric).abs() / closed.abs().max(1e-12);
            assert!(rel < 1e-3, "mu={mu} s={s}: closed {closed} vs numeric {numeric}");
        }
    }

    #[test]
    fn initial_classifier_is_near_uniform() {
        // small (not exactly zero) output init: close to uniform but off the
        // zero-gradient saddle of the entropy objective
        let d = disc(4);
        let td = d.classify(&Array1::from_elem(4, 0.3));
        for p in td.probs.iter() {
            assert!((p - 0.25).abs() < 0.02, "{p}");
        }
        assert!((td.probs.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn softmax_of_strong_logit() {
        // logits (10, 0, 0, 0): p0 = e^10 / (e^10 + 3)
        let expected = 10f64.exp() / (10f64.exp() + 3.0);
        assert!((expected - 0.999_863_8).abs() < 1e-6);
        let probs = softmax_rows(&array![[10.0, 0.0, 0.0, 0.0]]);
        assert!((probs[[0, 0]] - expected).abs() < 1e-12);
    }

    #[test]
    fn deterministic_given_epsilon_without_dropout() {
        let d = disc(5);
        let x = Array2::from_shape_fn((3, 8), |(i, j)| (i as f64 - j as f64) * 0.21);
        let eps = Array2::from_shape_fn((3, 4), |(i, j)| (i + j) as f64 * 0.1);
        let a = d.forward_cached::<ChaCha8Rng>(&x, Some(&eps), None);
        let b = d.forward_cached::<ChaCha8Rng>(&x, Some(&eps), None);
        assert_eq!(a.probs, b.probs);
    }

    #[test]
    fn wrong_input_length_panics() {
        let d = disc(6);
        assert!(std::panic::catch_unwind(|| d.encode_latent(&Array1::zeros(5))).is_err());
    }

    #[test]
    fn end_to_end_gradient_reaches_input() {
        // finite-difference check of d(sum of weighted probs)/d(input),
        // including the reparameterized latent
        let mut d = disc(7);
        // move off the zero-init saddle so gradients are generic
        let mut params = d.params_flat();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for p in params.iter_mut() {
            *p += rng.gen_range(-0.05..0.05);
        }
        d.set_params(&params);
        let x = Array2::from_shape_fn((2, 8), |(i, j)| 0.4 * (i as f64 + 1.0) - 0.13 * j as f64);
        let eps = Array2::from_shape_fn((2, 4), |(i, j)| 0.3 * (i as f64 - j as f64));
        let w = Array2::from_shape_fn((2, 4), |(i, j)| 1.0 + i as f64 - 0.5 * j as f64);
        let cache = d.forward_cached::<ChaCha8Rng>(&x, Some(&eps), None);
        d.zero_grad();
        let gx = d.backward(&cache, &w, 0.0);
        let f = |x: &Array2<f64>| {
            let c = d.forward_cached::<ChaCha8Rng>(x, Some(&eps), None);
            (&c.probs * &w).sum()
        };
        let e = 1e-6;
        let mut nonzero = false;
        for i in 0..2 {
            for j in 0..8 {
                let mut xp = x.clone();
                xp[[i, j]] += e;
                let mut xm = x.clone();
                xm[[i, j]] -= e;
                let fd = (f(&xp) - f(&xm)) / (2.0 * e);
                let rel = (gx[[i, j]] - fd).abs() / fd.abs().max(gx[[i, j]].abs()).max(1e-8);
                assert!(rel < 1e-4, "input ({i},{j}): {} vs {}", gx[[i, j]], fd);
                if gx[[i, j]].abs() > 1e-10 {
                    nonzero = true;
                }
            }
        }
        assert!(nonzero, "gradient at the skill input must be nonzero");
    }

    #[test]
    fn kl_weight_gradient_matches_finite_difference() {
        let mut d = disc(9);
        let mut params = d.params_flat();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for p in params.iter_mut() {
            *p += rng.gen_range(-0.05..0.05);
        }
        d.set_params(&params);
        let x = Array2::from_shape_fn((3, 8), |(i, j)| 0.2 * i as f64 + 0.1 * j as f64);
        let eps = Array2::zeros((3, 4));
        let beta = 0.7;
        let cache = d.forward_cached::<ChaCha8Rng>(&x, Some(&eps), None);
        d.zero_grad();
        d.backward(&cache, &Array2::zeros((3, 4)), beta);
        let grads = d.grads_flat();
        let mut p = d.params_flat();
        let loss = |d: &Discriminator| {
            beta * d
                .forward_cached::<ChaCha8Rng>(&x, Some(&eps), None)
                .mean_kl()
        };
        let e = 1e-6;
        let n = p.len();
        for &idx in &[3usize, n / 4, n / 2, n - 2] {
            let orig = p[idx];
            p[idx] = orig + e;
            d.set_params(&p);
            let fp = loss(&d);
            p[idx] = orig - e;
            d.set_params(&p);
            let fm = loss(&d);
            p[idx] = orig;
            d.set_params(&p);
            let fd = (fp - fm) / (2.0 * e);
            let rel = (grads[idx] - fd).abs() / fd.abs().max(grads[idx].abs()).max(1e-8);
            assert!(rel < 1e-4, "param {idx}: {} vs {}", grads[idx], fd);
        }
    }
}
