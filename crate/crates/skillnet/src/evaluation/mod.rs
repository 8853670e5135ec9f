//! Embedding quality evaluation: cross-view temporal alignment on held-out
//! tasks, 2D trajectory visualizations, and goal-distance reward curves.

pub mod plot;
pub mod stats;
pub mod tsne;

use crate::dataio::{Demonstration, MultiTaskDataset};
use crate::encoder::Encoder;
use ndarray::{Array1, Array2};
use serde::Serialize;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("sequences have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty embedding sequence")]
    Empty,
    #[error("too few frames for a trajectory plot: {got} < {need}")]
    TooFewFrames { got: usize, need: usize },
    #[error("no demonstrations match the requested tasks")]
    EmptySelection,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

/// Result of a single-direction alignment pass.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub value: f64,
    /// `nn_trace[j]` is the reference index nearest to query frame `j`.
    pub nn_trace: Vec<usize>,
}

/// Cross-view temporal alignment loss: for each query frame `j`, find the
/// Euclidean nearest neighbor in the reference sequence and average the
/// normalized index offset `|j - nn_j| / F`, then divide by `F` once more to
/// report the per-frame mean. A frame-synchronous embedding scores 0; random
/// embeddings score about 1/3.
///
/// Distance ties resolve to the query's own index when it is among the
/// minimizers, otherwise to the smallest index, so constant sequences score 0
/// instead of depending on scan order.
pub fn alignment_loss(
    query: &[Array1<f64>],
    reference: &[Array1<f64>],
) -> Result<Alignment, EvalError> {
    if query.is_empty() {
        return Err(EvalError::Empty);
    }
    if query.len() != reference.len() {
        return Err(EvalError::LengthMismatch(query.len(), reference.len()));
    }
    let f = query.len();
    let mut nn_trace = Vec::with_capacity(f);
    let mut total = 0.0;
    for (j, q) in query.iter().enumerate() {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (k, r) in reference.iter().enumerate() {
            let diff = q - r;
            let d = diff.dot(&diff);
            if d < best_d || (d == best_d && k == j) {
                best_d = d;
                best = k;
            }
        }
        nn_trace.push(best);
        total += best.abs_diff(j) as f64 / f as f64;
    }
    Ok(Alignment {
        value: total / f as f64,
        nn_trace,
    })
}

/// Embeds every frame of one view of a demonstration (no augmentation).
pub fn embed_view(encoder: &Encoder, demo: &Demonstration, view: u8) -> Vec<Array1<f64>> {
    let frames: Vec<_> = (0..demo.num_frames())
        .map(|t| demo.frame(view, t).normalize())
        .collect();
    encoder.embed_sequence(&frames)
}

/// Alignment of one demonstration, both view directions.
#[derive(Debug, Clone, Serialize)]
pub struct VideoAlignment {
    pub demo_id: String,
    pub task_name: String,
    /// view 0 queries against view 1 references.
    pub forward: f64,
    /// view 1 queries against view 0 references.
    pub backward: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlignmentReport {
    pub per_video: Vec<VideoAlignment>,
    pub mean: f64,
}

impl AlignmentReport {
    /// Plain-text rendering: one row per video, then the aggregate.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("demo_id                     task             fwd     bwd    mean\n");
        for v in &self.per_video {
            out.push_str(&format!(
                "{:<27} {:<14} {:>6.4}  {:>6.4}  {:>6.4}\n",
                v.demo_id, v.task_name, v.forward, v.backward, v.mean
            ));
        }
        out.push_str(&format!("overall mean alignment loss: {:.4}\n", self.mean));
        out
    }
}

/// Scores the encoder by cross-view alignment over every demonstration of the
/// selected tasks (empty selection = all tasks in the dataset).
pub fn evaluate_transfer(
    encoder: &Encoder,
    dataset: &MultiTaskDataset,
    tasks: &[String],
) -> Result<AlignmentReport, EvalError> {
    let mut per_video = Vec::new();
    for demo in &dataset.demonstrations {
        if !tasks.is_empty() && !tasks.iter().any(|t| *t == demo.task_name) {
            continue;
        }
        let v0 = embed_view(encoder, demo, 0);
        let v1 = embed_view(encoder, demo, 1);
        let fwd = alignment_loss(&v0, &v1)?;
        let bwd = alignment_loss(&v1, &v0)?;
        per_video.push(VideoAlignment {
            demo_id: demo.demo_id.clone(),
            task_name: demo.task_name.clone(),
            forward: fwd.value,
            backward: bwd.value,
            mean: 0.5 * (fwd.value + bwd.value),
        });
    }
    if per_video.is_empty() {
        return Err(EvalError::EmptySelection);
    }
    let mean = per_video.iter().map(|v| v.mean).sum::<f64>() / per_video.len() as f64;
    Ok(AlignmentReport { per_video, mean })
}

/// Minimum frame count for a meaningful 2D trajectory reduction.
pub const MIN_PLOT_FRAMES: usize = 5;

/// Embeds view 0 of a demonstration, reduces to 2D and writes a PNG scatter
/// (points colored by time) plus a JSON sidecar with the raw coordinates.
/// Returns the 2D points.
pub fn emit_trajectory_plot(
    encoder: &Encoder,
    demo: &Demonstration,
    out_png: &Path,
    seed: u64,
) -> Result<Array2<f64>, EvalError> {
    let f = demo.num_frames();
    if f < MIN_PLOT_FRAMES {
        return Err(EvalError::TooFewFrames {
            got: f,
            need: MIN_PLOT_FRAMES,
        });
    }
    let embeddings = embed_view(encoder, demo, 0);
    let dim = embeddings[0].len();
    let data = Array2::from_shape_fn((f, dim), |(i, j)| embeddings[i][j]);
    let reduced = tsne::tsne(&data, 10.0, 300, seed);
    let points: Vec<(f64, f64)> = (0..f).map(|i| (reduced[[i, 0]], reduced[[i, 1]])).collect();
    plot::save_scatter(&points, out_png)?;
    write_sidecar(out_png, &serde_json::json!({ "demo_id": demo.demo_id, "points": points }))?;
    Ok(reduced)
}

/// Embedding-space reward curve of a demonstration against a goal embedding:
/// negative Euclidean distance per frame, min-max normalized to [0, 1]. A
/// degenerate (constant) curve is emitted flat at 0.5 with a warning.
pub fn reward_curve(embeddings: &[Array1<f64>], goal: &Array1<f64>) -> Vec<f64> {
    let raw: Vec<f64> = embeddings
        .iter()
        .map(|e| {
            let d = e - goal;
            -d.dot(&d).sqrt()
        })
        .collect();
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-9 {
        log::warn!("degenerate reward curve (constant distances); emitting flat 0.5");
        return vec![0.5; raw.len()];
    }
    raw.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Writes the reward curve of view 0 of a demonstration toward a goal frame
/// taken from the opposite view (its last frame), as PNG plus JSON sidecar.
pub fn emit_reward_curve(
    encoder: &Encoder,
    demo: &Demonstration,
    out_png: &Path,
) -> Result<Vec<f64>, EvalError> {
    if demo.num_frames() == 0 {
        return Err(EvalError::Empty);
    }
    let embeddings = embed_view(encoder, demo, 0);
    let goal = encoder.embed(&demo.frame(1, demo.num_frames() - 1).normalize());
    let curve = reward_curve(&embeddings, &goal);
    plot::save_line(&curve, out_png)?;
    write_sidecar(out_png, &serde_json::json!({ "demo_id": demo.demo_id, "curve": curve }))?;
    Ok(curve)
}

fn write_sidecar(png_path: &Path, value: &serde_json::Value) -> Result<(), EvalError> {
    let path = png_path.with_extension("json");
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap())?;
    Ok(())
}
