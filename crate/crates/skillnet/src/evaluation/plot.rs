//! Minimal PNG plotting: scatter and line charts on a white canvas with a
//! framed plot area. Enough for trajectory and reward-curve figures without
//! pulling in a charting stack.

use image::{Rgb, RgbImage};
use std::path::Path;

pub const WIDTH: u32 = 640;
pub const HEIGHT: u32 = 480;
const MARGIN: u32 = 40;

pub struct Canvas {
    img: RgbImage,
}

impl Canvas {
    pub fn new() -> Self {
        let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
        // plot-area frame
        for x in MARGIN..(WIDTH - MARGIN) {
            img.put_pixel(x, MARGIN, Rgb([0, 0, 0]));
            img.put_pixel(x, HEIGHT - MARGIN, Rgb([0, 0, 0]));
        }
        for y in MARGIN..=(HEIGHT - MARGIN) {
            img.put_pixel(MARGIN, y, Rgb([0, 0, 0]));
            img.put_pixel(WIDTH - MARGIN, y, Rgb([0, 0, 0]));
        }
        Self { img }
    }

    /// Maps data coordinates into the plot area.
    fn to_px(&self, x: f64, y: f64, bounds: &Bounds) -> (i64, i64) {
        let w = (WIDTH - 2 * MARGIN) as f64;
        let h = (HEIGHT - 2 * MARGIN) as f64;
        let px = MARGIN as f64 + (x - bounds.x0) / (bounds.x1 - bounds.x0) * w;
        let py = (HEIGHT - MARGIN) as f64 - (y - bounds.y0) / (bounds.y1 - bounds.y0) * h;
        (px.round() as i64, py.round() as i64)
    }

    pub fn dot(&mut self, x: f64, y: f64, radius: i64, color: Rgb<u8>, bounds: &Bounds) {
        let (cx, cy) = self.to_px(x, y, bounds);
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                if dx * dx + dy * dy <= radius * radius {
                    self.put(cx + dx, cy + dy, color);
                }
            }
        }
    }

    pub fn line(&mut self, a: (f64, f64), b: (f64, f64), color: Rgb<u8>, bounds: &Bounds) {
        let (x0, y0) = self.to_px(a.0, a.1, bounds);
        let (x1, y1) = self.to_px(b.0, b.1, bounds);
        // Bresenham
        let (mut x, mut y) = (x0, y0);
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.put(x, y, color);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    fn put(&mut self, x: i64, y: i64, color: Rgb<u8>) {
        if x >= 0 && y >= 0 && (x as u32) < WIDTH && (y as u32) < HEIGHT {
            self.img.put_pixel(x as u32, y as u32, color);
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), image::ImageError> {
        if let Some(parent) = path.parent() {
            let _ = std::fs::create_dir_all(parent);
        }
        self.img.save(path)
    }
}

#[derive(Debug, Clone)]
pub struct Bounds {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Bounds {
    /// Bounds covering all points, padded, degenerate ranges widened.
    pub fn of(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let mut b = Bounds {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for (x, y) in points {
            b.x0 = b.x0.min(x);
            b.x1 = b.x1.max(x);
            b.y0 = b.y0.min(y);
            b.y1 = b.y1.max(y);
        }
        let pad = |lo: &mut f64, hi: &mut f64| {
            if !lo.is_finite() || !hi.is_finite() {
                *lo = 0.0;
                *hi = 1.0;
            }
            let span = (*hi - *lo).max(1e-9);
            *lo -= span * 0.05;
            *hi += span * 0.05;
        };
        pad(&mut b.x0, &mut b.x1);
        pad(&mut b.y0, &mut b.y1);
        b
    }
}

/// Blue-to-red ramp over `t` in [0, 1], used to color points by time.
pub fn time_color(t: f64) -> Rgb<u8> {
    let t = t.clamp(0.0, 1.0);
    Rgb([
        (255.0 * t) as u8,
        (80.0 * (1.0 - (2.0 * t - 1.0).abs())) as u8,
        (255.0 * (1.0 - t)) as u8,
    ])
}

/// Scatter plot of 2D points colored by their index order.
pub fn save_scatter(points: &[(f64, f64)], path: &Path) -> Result<(), image::ImageError> {
    let bounds = Bounds::of(points.iter().cloned());
    let mut canvas = Canvas::new();
    // faint connecting line to show the trajectory
    for w in points.windows(2) {
        canvas.line(w[0], w[1], Rgb([200, 200, 200]), &bounds);
    }
    let n = points.len().max(2) - 1;
    for (i, &(x, y)) in points.iter().enumerate() {
        canvas.dot(x, y, 4, time_color(i as f64 / n as f64), &bounds);
    }
    canvas.save(path)
}

/// Line plot of a series against its index.
pub fn save_line(series: &[f64], path: &Path) -> Result<(), image::ImageError> {
    let pts: Vec<(f64, f64)> = series.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect();
    let bounds = Bounds::of(pts.iter().cloned().chain([(0.0, 0.0), (0.0, 1.0)]));
    let mut canvas = Canvas::new();
    for w in pts.windows(2) {
        canvas.line(w[0], w[1], Rgb([30, 60, 200]), &bounds);
    }
    canvas.save(path)
}
