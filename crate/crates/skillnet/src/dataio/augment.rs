use super::Frame;
use ndarray::Array3;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Training-time photometric jitter plus horizontal mirroring. The optional
/// crop is meant for real-world-style data and is off by default.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub brightness: [f32; 2],
    pub contrast: [f32; 2],
    pub saturation: [f32; 2],
    pub mirror_prob: f64,
    /// Fraction of retained area, e.g. [0.8, 1.0]. `None` disables cropping.
    pub crop_area: Option<[f32; 2]>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            brightness: [0.7, 1.3],
            contrast: [0.7, 1.3],
            saturation: [0.7, 1.3],
            mirror_prob: 0.5,
            crop_area: None,
        }
    }
}

impl AugmentConfig {
    /// Identity configuration, useful for evaluation paths and tests.
    pub fn identity() -> Self {
        Self {
            brightness: [1.0, 1.0],
            contrast: [1.0, 1.0],
            saturation: [1.0, 1.0],
            mirror_prob: 0.0,
            crop_area: None,
        }
    }
}

fn sample_factor<R: Rng>(range: [f32; 2], rng: &mut R) -> f32 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.gen_range(range[0]..range[1])
    }
}

/// Applies augmentation to a raw frame. The rng draw order is fixed
/// (brightness, contrast, saturation, mirror, crop) so sampling stays a pure
/// function of the rng state. Output is again a valid raw frame of the same
/// size; normalization happens afterwards, batch-side.
pub fn augment<R: Rng>(frame: &Frame, rng: &mut R, cfg: &AugmentConfig) -> Frame {
    assert!(!frame.normalized, "augment expects raw frames");
    let mut px = frame.pixels.clone();
    let b = sample_factor(cfg.brightness, rng);
    let c = sample_factor(cfg.contrast, rng);
    let s = sample_factor(cfg.saturation, rng);
    let mirror = cfg.mirror_prob > 0.0 && rng.gen_bool(cfg.mirror_prob);
    let crop = cfg.crop_area.map(|area| {
        let frac = sample_factor(area, rng).sqrt();
        let max_off = 1.0 - frac;
        let ox: f32 = rng.gen_range(0.0..=max_off.max(f32::EPSILON));
        let oy: f32 = rng.gen_range(0.0..=max_off.max(f32::EPSILON));
        (frac, ox, oy)
    });

    if b != 1.0 {
        px.mapv_inplace(|v| (v * b).clamp(0.0, 255.0));
    }
    if c != 1.0 {
        let mean = px.mean().unwrap_or(0.0);
        px.mapv_inplace(|v| ((v - mean) * c + mean).clamp(0.0, 255.0));
    }
    if s != 1.0 {
        let (h, w) = (px.shape()[0], px.shape()[1]);
        for y in 0..h {
            for x in 0..w {
                let gray =
                    0.299 * px[[y, x, 0]] + 0.587 * px[[y, x, 1]] + 0.114 * px[[y, x, 2]];
                for ch in 0..3 {
                    px[[y, x, ch]] = (gray + (px[[y, x, ch]] - gray) * s).clamp(0.0, 255.0);
                }
            }
        }
    }
    if mirror {
        let w = px.shape()[1];
        let src = px.clone();
        for y in 0..px.shape()[0] {
            for x in 0..w {
                for ch in 0..3 {
                    px[[y, x, ch]] = src[[y, w - 1 - x, ch]];
                }
            }
        }
    }
    if let Some((frac, ox, oy)) = crop {
        px = crop_resize(&px, frac, ox, oy);
    }

    Frame {
        pixels: px,
        time_index: frame.time_index,
        view_id: frame.view_id,
        normalized: false,
    }
}

/// Crops the window `[oy, oy+frac) x [ox, ox+frac)` (fractions of the frame)
/// and resizes back to the original size with nearest-neighbor sampling.
fn crop_resize(px: &Array3<f32>, frac: f32, ox: f32, oy: f32) -> Array3<f32> {
    let (h, w) = (px.shape()[0], px.shape()[1]);
    let ch = ((h as f32) * frac).max(1.0) as usize;
    let cw = ((w as f32) * frac).max(1.0) as usize;
    let y0 = ((h as f32) * oy) as usize;
    let x0 = ((w as f32) * ox) as usize;
    let y0 = y0.min(h - ch);
    let x0 = x0.min(w - cw);
    Array3::from_shape_fn((h, w, 3), |(y, x, c)| {
        let sy = y0 + (y * ch) / h;
        let sx = x0 + (x * cw) / w;
        px[[sy.min(h - 1), sx.min(w - 1), c]]
    })
}
