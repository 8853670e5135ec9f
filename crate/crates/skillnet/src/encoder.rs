//! Frame encoder `E`: maps a normalized frame to an n-dimensional embedding.
//!
//! Two backbones share the same head (two conv layers, spatial softmax,
//! fully-connected output): a small strided net for desk-scale experiments
//! and a deeper feature extractor for full-resolution input. Both are
//! trained from random initialization; loading pretrained backbone weights
//! is possible through the checkpoint container but never required.

use crate::dataio::Frame;
use crate::nn::{
    relu4, relu4_backward, spatial_softmax_backward, spatial_softmax_forward, Conv2d, Linear,
};
use ndarray::{Array1, Array2, Array4};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub type EmbeddingVector = Array1<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    Small,
    Full,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub backbone: Backbone,
    pub embedding_dim: usize,
    /// Width of the two conv head layers feeding the spatial softmax.
    pub feature_channels: usize,
    pub input_size: usize,
    /// Optional unit-normalization of the output embedding (off by default;
    /// the bounded similarity term of the metric loss controls norm growth).
    pub l2_normalize: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            backbone: Backbone::Small,
            embedding_dim: 32,
            feature_channels: 32,
            input_size: 64,
            l2_normalize: false,
        }
    }
}

impl EncoderConfig {
    fn block_channels(&self) -> Vec<usize> {
        match self.backbone {
            Backbone::Small => vec![12, 20, 28, 32],
            Backbone::Full => vec![32, 64, 96, 128, 128],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Encoder {
    pub config: EncoderConfig,
    blocks: Vec<Conv2d>,
    head1: Conv2d,
    head2: Conv2d,
    fc: Linear,
}

/// Intermediate activations kept for the backward pass.
pub struct EncoderCache {
    input: Array4<f64>,
    block_pre: Vec<Array4<f64>>,
    block_out: Vec<Array4<f64>>,
    head1_pre: Array4<f64>,
    head1_out: Array4<f64>,
    ssm_out: Array2<f64>,
    ssm_probs: Array4<f64>,
    raw_embed: Array2<f64>,
}

impl Encoder {
    pub fn new<R: Rng>(config: EncoderConfig, rng: &mut R) -> Self {
        assert!(config.embedding_dim >= 2, "embedding_dim must be >= 2");
        let channels = config.block_channels();
        let mut blocks = Vec::new();
        let mut in_c = 3;
        let mut size = config.input_size;
        for &out_c in &channels {
            let conv = Conv2d::new(in_c, out_c, 3, 2, rng);
            size = conv.out_size(size);
            assert!(size >= 2, "input_size {} too small for backbone", config.input_size);
            in_c = out_c;
            blocks.push(conv);
        }
        let head1 = Conv2d::new(in_c, config.feature_channels, 3, 1, rng);
        let head2 = Conv2d::new(config.feature_channels, config.feature_channels, 3, 1, rng);
        let fc = Linear::new(2 * config.feature_channels, config.embedding_dim, rng);
        Self {
            config,
            blocks,
            head1,
            head2,
            fc,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.config.embedding_dim
    }

    /// Forward pass over an `N x 3 x H x W` batch, keeping activations.
    pub fn forward_cached(&self, input: &Array4<f64>) -> (Array2<f64>, EncoderCache) {
        assert_eq!(input.shape()[2], self.config.input_size, "frame size mismatch");
        assert_eq!(input.shape()[3], self.config.input_size, "frame size mismatch");
        let mut x = input.clone();
        let mut block_pre = Vec::new();
        let mut block_out = Vec::new();
        for conv in &self.blocks {
            let pre = conv.forward(&x);
            let out = relu4(&pre);
            block_pre.push(pre);
            x = out.clone();
            block_out.push(out);
        }
        let head1_pre = self.head1.forward(&x);
        let head1_out = relu4(&head1_pre);
        let head2_pre = self.head2.forward(&head1_out);
        // spatial softmax consumes the raw head output (it is shift invariant,
        // a ReLU in front would only flatten the attention maps)
        let (ssm_out, ssm_probs) = spatial_softmax_forward(&head2_pre);
        let raw_embed = self.fc.forward(&ssm_out);
        let embed = if self.config.l2_normalize {
            normalize_rows(&raw_embed)
        } else {
            raw_embed.clone()
        };
        let cache = EncoderCache {
            input: input.clone(),
            block_pre,
            block_out,
            head1_pre,
            head1_out,
            ssm_out,
            ssm_probs,
            raw_embed,
        };
        (embed, cache)
    }

    /// Forward without cache (inference).
    pub fn forward(&self, input: &Array4<f64>) -> Array2<f64> {
        self.forward_cached(input).0
    }

    /// Embeds one normalized frame.
    pub fn embed(&self, frame: &Frame) -> EmbeddingVector {
        assert!(frame.normalized, "embed expects a normalized frame");
        let chw = frame.to_chw();
        let (h, w) = (chw.shape()[1], chw.shape()[2]);
        let input = chw.into_shape_with_order((1, 3, h, w)).unwrap();
        self.forward(&input).row(0).to_owned()
    }

    /// Order-preserving batched embedding of a frame sequence.
    pub fn embed_sequence(&self, frames: &[Frame]) -> Vec<EmbeddingVector> {
        let mut out = Vec::with_capacity(frames.len());
        for chunk in frames.chunks(16) {
            let batch = crate::dataio::frames_to_batch(chunk);
            let emb = self.forward(&batch);
            for i in 0..chunk.len() {
                out.push(emb.row(i).to_owned());
            }
        }
        out
    }

    /// Accumulates weight gradients from dL/d(embeddings); returns dL/d(input).
    pub fn backward(&mut self, cache: &EncoderCache, grad_embed: &Array2<f64>) -> Array4<f64> {
        let grad_raw = if self.config.l2_normalize {
            normalize_rows_backward(&cache.raw_embed, grad_embed)
        } else {
            grad_embed.clone()
        };
        let g_ssm = self.fc.backward(&cache.ssm_out, &grad_raw);
        let g_head2_pre = spatial_softmax_backward(&cache.ssm_probs, &cache.ssm_out, &g_ssm);
        let g_head1_out = self.head2.backward(&cache.head1_out, &g_head2_pre);
        let g_head1_pre = relu4_backward(&cache.head1_pre, &g_head1_out);
        let last_block_out = cache.block_out.last().unwrap();
        let mut g = self.head1.backward(last_block_out, &g_head1_pre);
        for bi in (0..self.blocks.len()).rev() {
            let g_pre = relu4_backward(&cache.block_pre[bi], &g);
            let layer_in = if bi == 0 {
                &cache.input
            } else {
                &cache.block_out[bi - 1]
            };
            g = self.blocks[bi].backward(layer_in, &g_pre);
        }
        g
    }

    pub fn zero_grad(&mut self) {
        for b in &mut self.blocks {
            b.zero_grad();
        }
        self.head1.zero_grad();
        self.head2.zero_grad();
        self.fc.zero_grad();
    }

    pub fn num_params(&self) -> usize {
        self.blocks.iter().map(|b| b.num_params()).sum::<usize>()
            + self.head1.num_params()
            + self.head2.num_params()
            + self.fc.num_params()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for b in &self.blocks {
            out.extend(b.w.iter());
            out.extend(b.b.iter());
        }
        for c in [&self.head1, &self.head2] {
            out.extend(c.w.iter());
            out.extend(c.b.iter());
        }
        out.extend(self.fc.w.iter());
        out.extend(self.fc.b.iter());
        out
    }

    pub fn grads_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for b in &self.blocks {
            out.extend(b.gw.iter());
            out.extend(b.gb.iter());
        }
        for c in [&self.head1, &self.head2] {
            out.extend(c.gw.iter());
            out.extend(c.gb.iter());
        }
        out.extend(self.fc.gw.iter());
        out.extend(self.fc.gb.iter());
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut offset = 0;
        let mut take = |arr: &mut [f64]| {
            arr.copy_from_slice(&flat[offset..offset + arr.len()]);
            offset += arr.len();
        };
        for b in &mut self.blocks {
            take(b.w.as_slice_mut().unwrap());
            take(b.b.as_slice_mut().unwrap());
        }
        take(self.head1.w.as_slice_mut().unwrap());
        take(self.head1.b.as_slice_mut().unwrap());
        take(self.head2.w.as_slice_mut().unwrap());
        take(self.head2.b.as_slice_mut().unwrap());
        take(self.fc.w.as_slice_mut().unwrap());
        take(self.fc.b.as_slice_mut().unwrap());
    }

    /// Restores gradient buffers after deserialization.
    pub fn ensure_grad_buffers(&mut self) {
        for b in &mut self.blocks {
            b.ensure_grad_buffers();
        }
        self.head1.ensure_grad_buffers();
        self.head2.ensure_grad_buffers();
        self.fc.ensure_grad_buffers();
    }
}

fn normalize_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let n = row.dot(&row).sqrt().max(1e-12);
        row.mapv_inplace(|v| v / n);
    }
    out
}

fn normalize_rows_backward(raw: &Array2<f64>, grad_out: &Array2<f64>) -> Array2<f64> {
    let mut grad = Array2::zeros(raw.raw_dim());
    for i in 0..raw.nrows() {
        let r = raw.row(i);
        let g = grad_out.row(i);
        let n = r.dot(&r).sqrt().max(1e-12);
        let y = r.mapv(|v| v / n);
        let dot = y.dot(&g);
        for j in 0..raw.ncols() {
            grad[[i, j]] = (g[j] - y[j] * dot) / n;
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_encoder(seed: u64) -> Encoder {
        let cfg = EncoderConfig {
            input_size: 32,
            feature_channels: 8,
            embedding_dim: 32,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Encoder::new(cfg, &mut rng)
    }

    fn tiny_frame(seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let px = Array3::from_shape_fn((32, 32, 3), |_| rng.gen_range(0.0..255.0));
        Frame {
            pixels: px,
            time_index: 0,
            view_id: 0,
            normalized: false,
        }
        .normalize()
    }

    #[test]
    fn embedding_has_configured_dimension() {
        let enc = tiny_encoder(0);
        let e = enc.embed(&tiny_frame(1));
        assert_eq!(e.len(), 32);
        assert!(e.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn embed_is_deterministic() {
        let enc = tiny_encoder(0);
        let f = tiny_frame(2);
        assert_eq!(enc.embed(&f), enc.embed(&f));
    }

    #[test]
    fn embed_sequence_matches_embed_and_preserves_order() {
        let enc = tiny_encoder(0);
        let frames: Vec<Frame> = (0..5).map(|i| tiny_frame(10 + i)).collect();
        let seq = enc.embed_sequence(&frames);
        assert_eq!(seq.len(), 5);
        for (i, f) in frames.iter().enumerate() {
            let single = enc.embed(f);
            for (a, b) in seq[i].iter().zip(single.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let rev: Vec<Frame> = frames.iter().rev().cloned().collect();
        let seq_rev = enc.embed_sequence(&rev);
        for (a, b) in seq_rev.iter().zip(seq.iter().rev()) {
            assert_eq!(a, b);
        }
        assert!(enc.embed_sequence(&[]).is_empty());
    }

    #[test]
    fn wrong_input_size_panics() {
        let enc = tiny_encoder(0);
        let bad = Array4::zeros((1, 3, 8, 8));
        assert!(std::panic::catch_unwind(|| enc.forward(&bad)).is_err());
    }

    #[test]
    fn input_gradient_matches_finite_difference() {
        let mut enc = tiny_encoder(3);
        let f = tiny_frame(4);
        let input = crate::dataio::frames_to_batch(&[f]);
        let weights = {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            Array2::from_shape_fn((1, 32), |_| rng.gen_range(-1.0..1.0))
        };
        let (emb, cache) = enc.forward_cached(&input);
        let _ = emb;
        let gx = enc.backward(&cache, &weights);
        let loss = |x: &Array4<f64>| (enc.forward(x) * &weights).sum();
        let eps = 1e-5;
        let mut max_rel: f64 = 0.0;
        for &(c, i, j) in &[(0, 3, 3), (1, 8, 12), (2, 15, 0), (0, 7, 9), (1, 1, 1)] {
            let mut xp = input.clone();
            xp[[0, c, i, j]] += eps;
            let mut xm = input.clone();
            xm[[0, c, i, j]] -= eps;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * eps);
            let g = gx[[0, c, i, j]];
            let rel = (g - fd).abs() / fd.abs().max(g.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }

    #[test]
    fn weight_gradient_matches_finite_difference() {
        let mut enc = tiny_encoder(6);
        let input = crate::dataio::frames_to_batch(&[tiny_frame(7), tiny_frame(8)]);
        let weights = {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            Array2::from_shape_fn((2, 32), |_| rng.gen_range(-1.0..1.0))
        };
        let (_, cache) = enc.forward_cached(&input);
        enc.zero_grad();
        enc.backward(&cache, &weights);
        let grads = enc.grads_flat();
        let mut params = enc.params_flat();
        let eps = 1e-5;
        let n = params.len();
        // spot-check a spread of parameter indices
        for &idx in &[0usize, 7, n / 3, n / 2, 2 * n / 3, n - 5, n - 1] {
            let orig = params[idx];
            params[idx] = orig + eps;
            enc.set_params(&params);
            let fp = (enc.forward(&input).clone() * &weights).sum();
            params[idx] = orig - eps;
            enc.set_params(&params);
            let fm = (enc.forward(&input).clone() * &weights).sum();
            params[idx] = orig;
            enc.set_params(&params);
            let fd = (fp - fm) / (2.0 * eps);
            let g = grads[idx];
            let rel = (g - fd).abs() / fd.abs().max(g.abs()).max(1e-8);
            assert!(rel < 1e-4, "param {idx}: analytic {g} vs fd {fd}");
        }
    }

    #[test]
    fn l2_normalized_embeddings_have_unit_norm() {
        let cfg = EncoderConfig {
            input_size: 32,
            feature_channels: 8,
            l2_normalize: true,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let enc = Encoder::new(cfg, &mut rng);
        let e = enc.embed(&tiny_frame(11));
        assert!((e.dot(&e).sqrt() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn params_roundtrip() {
        let mut enc = tiny_encoder(12);
        let p = enc.params_flat();
        enc.set_params(&p);
        assert_eq!(p, enc.params_flat());
    }
}
