//! Multi-view demonstration datasets: disk loading, procedural generation,
//! augmentation, and the batch samplers the training losses consume.
//!
//! On-disk layout:
//!
//! ```text
//! <root>/<split>/<task_name>/<demo_id>/view0/frame_000000.png
//!                                      view1/frame_000000.png
//!                                      meta.json   # success, fps, states
//! ```
//!
//! Task names are used only by the generator and by evaluation grouping;
//! none of the samplers read them, so training stays label-free.

mod augment;
mod sample;
pub mod synthetic;

pub use augment::{augment, AugmentConfig};
pub use sample::{sample_metric_batch, sample_skill_pairs, BatchSpec, MultiViewBatch, SkillFrameSpec};
pub use synthetic::{generate_synthetic_dataset, GeneratorConfig};

use crate::world::{TaskInstance, WorldState};
use ndarray::{Array3, Array4};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

/// Per-channel statistics used to normalize frames (standard ImageNet values).
pub const CHANNEL_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const CHANNEL_STD: [f32; 3] = [0.229, 0.224, 0.225];

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("dataset root or split directory not found: {0}")]
    MissingRoot(PathBuf),
    #[error("demonstration {demo_id}: view lengths differ ({len0} vs {len1})")]
    LengthMismatch {
        demo_id: String,
        len0: usize,
        len1: usize,
    },
    #[error("demonstration {demo_id}: missing view{view} directory")]
    MissingView { demo_id: String, view: u8 },
    #[error("demonstration {demo_id}: {msg}")]
    BadDemo { demo_id: String, msg: String },
    #[error("unknown task name: {0}")]
    UnknownTask(String),
    #[error("dataset too small for batch spec: {0}")]
    TooSmall(String),
    #[error("no eligible demonstration for skill sampling")]
    NoEligibleDemo,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("metadata error: {0}")]
    Meta(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn dir_name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

/// One frame. Raw frames hold values in [0, 255]; normalized frames are
/// `(v/255 - mean) / std` per channel. Layout is `H x W x 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub pixels: Array3<f32>,
    pub time_index: usize,
    pub view_id: u8,
    pub normalized: bool,
}

impl Frame {
    pub fn from_raw_u8(pixels: &Array3<u8>, time_index: usize, view_id: u8) -> Self {
        Self {
            pixels: pixels.mapv(|v| v as f32),
            time_index,
            view_id,
            normalized: false,
        }
    }

    pub fn size(&self) -> usize {
        self.pixels.shape()[0]
    }

    /// Applies channel normalization; a no-op error guard against double
    /// normalization.
    pub fn normalize(mut self) -> Self {
        assert!(!self.normalized, "frame already normalized");
        for c in 0..3 {
            let (m, s) = (CHANNEL_MEAN[c], CHANNEL_STD[c]);
            self.pixels
                .slice_mut(ndarray::s![.., .., c])
                .mapv_inplace(|v| (v / 255.0 - m) / s);
        }
        self.normalized = true;
        self
    }

    /// Converts to the `3 x H x W` f64 layout the encoder consumes.
    pub fn to_chw(&self) -> Array3<f64> {
        let (h, w) = (self.pixels.shape()[0], self.pixels.shape()[1]);
        Array3::from_shape_fn((3, h, w), |(c, i, j)| self.pixels[[i, j, c]] as f64)
    }
}

/// Stacks normalized frames into the `N x 3 x H x W` batch layout.
pub fn frames_to_batch(frames: &[Frame]) -> Array4<f64> {
    assert!(!frames.is_empty());
    let size = frames[0].size();
    let mut out = Array4::zeros((frames.len(), 3, size, size));
    for (n, f) in frames.iter().enumerate() {
        assert!(f.normalized, "batch frames must be normalized");
        out.index_axis_mut(ndarray::Axis(0), n).assign(&f.to_chw());
    }
    out
}

/// A synchronized two-view recording of one task execution.
#[derive(Debug, Clone)]
pub struct Demonstration {
    pub demo_id: String,
    pub task_name: String,
    pub success: bool,
    pub fps: u32,
    /// `views[v][t]` is the raw `H x W x 3` frame of view `v` at time `t`.
    pub views: [Vec<Array3<u8>>; 2],
    /// Ground-truth simulator states, present for synthetic demonstrations.
    pub states: Option<Vec<WorldState>>,
    /// Scenario the demo was generated from (goal predicate for RL).
    pub scenario: Option<TaskInstance>,
}

impl Demonstration {
    pub fn num_frames(&self) -> usize {
        self.views[0].len()
    }

    pub fn frame_size(&self) -> usize {
        self.views[0][0].shape()[0]
    }

    /// Raw frame accessor.
    pub fn frame(&self, view: u8, t: usize) -> Frame {
        Frame::from_raw_u8(&self.views[view as usize][t], t, view)
    }
}

#[derive(Debug, Clone)]
pub struct MultiTaskDataset {
    pub demonstrations: Vec<Demonstration>,
    pub tasks: BTreeSet<String>,
    pub split: Split,
}

impl MultiTaskDataset {
    pub fn new(demonstrations: Vec<Demonstration>, split: Split) -> Self {
        let tasks = demonstrations
            .iter()
            .map(|d| d.task_name.clone())
            .collect();
        Self {
            demonstrations,
            tasks,
            split,
        }
    }

    pub fn len(&self) -> usize {
        self.demonstrations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demonstrations.is_empty()
    }

    /// Restricts to the named tasks (evaluation-side grouping only).
    pub fn filter_tasks(&self, tasks: &[String]) -> MultiTaskDataset {
        let demos = self
            .demonstrations
            .iter()
            .filter(|d| tasks.contains(&d.task_name))
            .cloned()
            .collect();
        MultiTaskDataset::new(demos, self.split)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DemoMeta {
    success: bool,
    fps: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    states: Option<Vec<WorldState>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scenario: Option<TaskInstance>,
}

/// Loads every demonstration of one split. Malformed demonstrations are
/// rejected individually and reported in `rejected`; a missing split
/// directory is fatal. An existing but empty split yields an empty dataset
/// with a warning.
pub fn load_dataset(root: &Path, split: Split) -> Result<LoadOutcome, DataError> {
    let split_dir = root.join(split.dir_name());
    if !split_dir.is_dir() {
        return Err(DataError::MissingRoot(split_dir));
    }
    let mut demos = Vec::new();
    let mut rejected = Vec::new();
    let mut task_dirs: Vec<PathBuf> = std::fs::read_dir(&split_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    task_dirs.sort();
    for task_dir in task_dirs {
        let task_name = task_dir.file_name().unwrap().to_string_lossy().to_string();
        let mut demo_dirs: Vec<PathBuf> = std::fs::read_dir(&task_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        demo_dirs.sort();
        for demo_dir in demo_dirs {
            let demo_id = demo_dir.file_name().unwrap().to_string_lossy().to_string();
            match load_demo(&demo_dir, &demo_id, &task_name) {
                Ok(d) => demos.push(d),
                Err(e) => rejected.push(e),
            }
        }
    }
    if demos.is_empty() && rejected.is_empty() {
        log::warn!("split {split} under {} is empty", root.display());
    }
    Ok(LoadOutcome {
        dataset: MultiTaskDataset::new(demos, split),
        rejected,
    })
}

pub struct LoadOutcome {
    pub dataset: MultiTaskDataset,
    pub rejected: Vec<DataError>,
}

fn load_demo(dir: &Path, demo_id: &str, task_name: &str) -> Result<Demonstration, DataError> {
    let mut views: [Vec<Array3<u8>>; 2] = [Vec::new(), Vec::new()];
    for v in 0..2u8 {
        let vdir = dir.join(format!("view{v}"));
        if !vdir.is_dir() {
            return Err(DataError::MissingView {
                demo_id: demo_id.to_string(),
                view: v,
            });
        }
        let mut frame_paths: Vec<PathBuf> = std::fs::read_dir(&vdir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map_or(false, |e| e == "png"))
            .collect();
        frame_paths.sort();
        for p in frame_paths {
            let img = image::open(&p)?.into_rgb8();
            let (w, h) = img.dimensions();
            let arr = Array3::from_shape_fn((h as usize, w as usize, 3), |(y, x, c)| {
                img.get_pixel(x as u32, y as u32)[c]
            });
            views[v as usize].push(arr);
        }
    }
    if views[0].len() != views[1].len() {
        return Err(DataError::LengthMismatch {
            demo_id: demo_id.to_string(),
            len0: views[0].len(),
            len1: views[1].len(),
        });
    }
    if views[0].len() < 2 {
        return Err(DataError::BadDemo {
            demo_id: demo_id.to_string(),
            msg: format!("too few frames ({})", views[0].len()),
        });
    }
    let meta_path = dir.join("meta.json");
    let meta: DemoMeta = serde_json::from_reader(std::fs::File::open(&meta_path).map_err(|_| {
        DataError::BadDemo {
            demo_id: demo_id.to_string(),
            msg: "missing meta.json".to_string(),
        }
    })?)?;
    Ok(Demonstration {
        demo_id: demo_id.to_string(),
        task_name: task_name.to_string(),
        success: meta.success,
        fps: meta.fps,
        views,
        states: meta.states,
        scenario: meta.scenario,
    })
}

/// Writes a dataset in the documented directory layout.
pub fn save_dataset(dataset: &MultiTaskDataset, root: &Path) -> Result<(), DataError> {
    for demo in &dataset.demonstrations {
        let dir = root
            .join(dataset.split.dir_name())
            .join(&demo.task_name)
            .join(&demo.demo_id);
        for v in 0..2u8 {
            let vdir = dir.join(format!("view{v}"));
            std::fs::create_dir_all(&vdir)?;
            for (t, frame) in demo.views[v as usize].iter().enumerate() {
                let (h, w) = (frame.shape()[0], frame.shape()[1]);
                let mut img = image::RgbImage::new(w as u32, h as u32);
                for y in 0..h {
                    for x in 0..w {
                        img.put_pixel(
                            x as u32,
                            y as u32,
                            image::Rgb([frame[[y, x, 0]], frame[[y, x, 1]], frame[[y, x, 2]]]),
                        );
                    }
                }
                img.save(vdir.join(format!("frame_{t:06}.png")))?;
            }
        }
        let meta = DemoMeta {
            success: demo.success,
            fps: demo.fps,
            states: demo.states.clone(),
            scenario: demo.scenario.clone(),
        };
        serde_json::to_writer_pretty(std::fs::File::create(dir.join("meta.json"))?, &meta)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_roundtrip_values() {
        let raw = Array3::from_elem((4, 4, 3), 255u8);
        let f = Frame::from_raw_u8(&raw, 0, 0).normalize();
        for c in 0..3 {
            let expected = (1.0 - CHANNEL_MEAN[c]) / CHANNEL_STD[c];
            assert!((f.pixels[[0, 0, c]] - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn chw_layout_transposes() {
        let mut raw = Array3::zeros((2, 2, 3));
        raw[[0, 1, 2]] = 7u8;
        let f = Frame::from_raw_u8(&raw, 0, 0);
        let chw = f.to_chw();
        assert_eq!(chw[[2, 0, 1]], 7.0);
    }
}
