use super::{augment, AugmentConfig, DataError, Frame, MultiTaskDataset};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Shape of a metric-learning batch: `num_frames` frames drawn from
/// `num_view_pairs` demonstrations.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchSpec {
    pub num_frames: usize,
    pub num_view_pairs: usize,
    /// Width (frames) of the per-demonstration span the time indices are
    /// drawn from; 0 draws from the whole demonstration. A finite window
    /// restricts in-batch temporal negatives to actual temporal neighbors,
    /// leaving the relative geometry of distant frames to the encoder's
    /// natural smoothness.
    pub temporal_window: usize,
}

impl Default for BatchSpec {
    fn default() -> Self {
        Self {
            num_frames: 32,
            num_view_pairs: 4,
            temporal_window: 8,
        }
    }
}

/// How a skill is cut out of a demonstration: `num_domain_frames` frames of
/// one view separated by `stride_dt` frames.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SkillFrameSpec {
    pub num_domain_frames: usize,
    pub stride_dt: usize,
}

impl Default for SkillFrameSpec {
    fn default() -> Self {
        Self {
            num_domain_frames: 2,
            stride_dt: 8,
        }
    }
}

impl SkillFrameSpec {
    /// Frames a demonstration must at least have for one skill window.
    pub fn min_frames(&self) -> usize {
        (self.num_domain_frames - 1) * self.stride_dt + 1
    }
}

/// Frames sampled for the metric loss. Two frames share a label iff they are
/// the two simultaneous views of the same demonstration time index; frames
/// with the same `source_pair_ids` but different labels act as temporal
/// negatives.
#[derive(Debug, Clone)]
pub struct MultiViewBatch {
    pub frames: Vec<Frame>,
    pub anchor_labels: Vec<usize>,
    pub source_pair_ids: Vec<usize>,
    pub time_indices: Vec<usize>,
}

/// Samples a metric batch: `num_view_pairs` demonstrations, per demonstration
/// `num_frames / (2 * num_view_pairs)` distinct time indices, and per index
/// both views. Frames are augmented and then normalized. Task names are never
/// consulted.
pub fn sample_metric_batch<R: Rng>(
    dataset: &MultiTaskDataset,
    spec: &BatchSpec,
    aug: &AugmentConfig,
    rng: &mut R,
) -> Result<MultiViewBatch, DataError> {
    let n = spec.num_view_pairs;
    if n == 0 || spec.num_frames % (2 * n) != 0 {
        return Err(DataError::TooSmall(format!(
            "num_frames {} must be a positive multiple of 2 * num_view_pairs {}",
            spec.num_frames, n
        )));
    }
    let per_pair = spec.num_frames / (2 * n);
    if dataset.len() < n {
        return Err(DataError::TooSmall(format!(
            "{} demonstrations available, {} view pairs requested",
            dataset.len(),
            n
        )));
    }
    let demo_idx = sample_distinct(dataset.len(), n, rng);
    let mut frames = Vec::with_capacity(spec.num_frames);
    let mut anchor_labels = Vec::with_capacity(spec.num_frames);
    let mut source_pair_ids = Vec::with_capacity(spec.num_frames);
    let mut time_indices = Vec::with_capacity(spec.num_frames);
    for (pair_id, &di) in demo_idx.iter().enumerate() {
        let demo = &dataset.demonstrations[di];
        let f = demo.num_frames();
        if f < per_pair {
            return Err(DataError::TooSmall(format!(
                "demonstration {} has {} frames, {} indices needed",
                demo.demo_id, f, per_pair
            )));
        }
        let window = if spec.temporal_window == 0 {
            f
        } else {
            spec.temporal_window.clamp(per_pair, f)
        };
        let start = rng.gen_range(0..=(f - window));
        let times = sample_distinct(window, per_pair, rng);
        for (slot, &t) in times.iter().enumerate() {
            let t = start + t;
            let label = pair_id * per_pair + slot;
            for view in 0..2u8 {
                let raw = demo.frame(view, t);
                let out = augment(&raw, rng, aug).normalize();
                frames.push(out);
                anchor_labels.push(label);
                source_pair_ids.push(pair_id);
                time_indices.push(t);
            }
        }
    }
    Ok(MultiViewBatch {
        frames,
        anchor_labels,
        source_pair_ids,
        time_indices,
    })
}

/// Samples `count` skill windows: each is `num_domain_frames` frames of one
/// view of one demonstration at `t, t + dt, ...`, augmented and normalized.
/// With `success_only`, only successful demonstrations are eligible.
pub fn sample_skill_pairs<R: Rng>(
    dataset: &MultiTaskDataset,
    spec: &SkillFrameSpec,
    count: usize,
    success_only: bool,
    aug: &AugmentConfig,
    rng: &mut R,
) -> Result<Vec<Vec<Frame>>, DataError> {
    let eligible: Vec<usize> = dataset
        .demonstrations
        .iter()
        .enumerate()
        .filter(|(_, d)| (!success_only || d.success) && d.num_frames() >= spec.min_frames())
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        return Err(DataError::NoEligibleDemo);
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let demo = &dataset.demonstrations[eligible[rng.gen_range(0..eligible.len())]];
        let view: u8 = rng.gen_range(0..2);
        let max_start = demo.num_frames() - 1 - (spec.num_domain_frames - 1) * spec.stride_dt;
        let t0 = rng.gen_range(0..=max_start);
        let tuple: Vec<Frame> = (0..spec.num_domain_frames)
            .map(|k| {
                let raw = demo.frame(view, t0 + k * spec.stride_dt);
                augment(&raw, rng, aug).normalize()
            })
            .collect();
        out.push(tuple);
    }
    Ok(out)
}

/// `k` distinct values from `0..n`, deterministic partial Fisher-Yates.
fn sample_distinct<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    assert!(k <= n);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate_synthetic_dataset, GeneratorConfig, Split};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_dataset(seed: u64) -> MultiTaskDataset {
        let cfg = GeneratorConfig {
            tasks: vec!["stack".into()],
            demos_per_task: 6,
            fraction_unsuccessful: 0.5,
            frames: 40,
            frame_size: 32,
            split: Split::Train,
        };
        generate_synthetic_dataset(&cfg, seed).unwrap()
    }

    #[test]
    fn metric_batch_structure() {
        let ds = small_dataset(11);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = sample_metric_batch(&ds, &BatchSpec::default(), &AugmentConfig::identity(), &mut rng)
            .unwrap();
        assert_eq!(b.frames.len(), 32);
        let labels: std::collections::BTreeSet<_> = b.anchor_labels.iter().collect();
        assert_eq!(labels.len(), 16);
        for l in labels {
            assert_eq!(b.anchor_labels.iter().filter(|&x| x == l).count(), 2);
        }
    }

    #[test]
    fn single_pair_batch() {
        let ds = small_dataset(12);
        let spec = BatchSpec {
            num_frames: 8,
            num_view_pairs: 1,
            temporal_window: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = sample_metric_batch(&ds, &spec, &AugmentConfig::identity(), &mut rng).unwrap();
        assert_eq!(b.frames.len(), 8);
        let labels: std::collections::BTreeSet<_> = b.anchor_labels.iter().collect();
        assert_eq!(labels.len(), 4);
        assert!(b.source_pair_ids.iter().all(|&p| p == 0));
    }

    #[test]
    fn positives_are_cross_view_simultaneous() {
        let ds = small_dataset(13);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = sample_metric_batch(&ds, &BatchSpec::default(), &AugmentConfig::identity(), &mut rng)
            .unwrap();
        for i in 0..b.frames.len() {
            for j in (i + 1)..b.frames.len() {
                if b.anchor_labels[i] == b.anchor_labels[j] {
                    assert_ne!(b.frames[i].view_id, b.frames[j].view_id);
                    assert_eq!(b.time_indices[i], b.time_indices[j]);
                }
            }
        }
    }

    #[test]
    fn windowed_batch_time_indices_are_local() {
        let ds = small_dataset(17);
        let spec = BatchSpec {
            num_frames: 16,
            num_view_pairs: 2,
            temporal_window: 6,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let b =
                sample_metric_batch(&ds, &spec, &AugmentConfig::identity(), &mut rng).unwrap();
            for pair in 0..2usize {
                let ts: Vec<usize> = b
                    .time_indices
                    .iter()
                    .zip(&b.source_pair_ids)
                    .filter(|(_, &p)| p == pair)
                    .map(|(&t, _)| t)
                    .collect();
                let span = ts.iter().max().unwrap() - ts.iter().min().unwrap();
                assert!(span < 6, "time span {span} exceeds the temporal window");
            }
        }
    }

    #[test]
    fn too_small_dataset_errors() {
        let ds = small_dataset(14);
        let spec = BatchSpec {
            num_frames: 64,
            num_view_pairs: 8,
            temporal_window: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            sample_metric_batch(&ds, &spec, &AugmentConfig::identity(), &mut rng),
            Err(DataError::TooSmall(_))
        ));
    }

    #[test]
    fn skill_pairs_shape_and_stride() {
        let ds = small_dataset(15);
        let spec = SkillFrameSpec {
            num_domain_frames: 2,
            stride_dt: 15,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pairs =
            sample_skill_pairs(&ds, &spec, 16, true, &AugmentConfig::identity(), &mut rng).unwrap();
        assert_eq!(pairs.len(), 16);
        for p in &pairs {
            assert_eq!(p.len(), 2);
            assert_eq!(p[1].time_index - p[0].time_index, 15);
            assert_eq!(p[0].view_id, p[1].view_id);
            // valid start indices for F=40: t in [0, 24]
            assert!(p[0].time_index <= 24);
        }
    }

    #[test]
    fn single_frame_skills() {
        let ds = small_dataset(16);
        let spec = SkillFrameSpec {
            num_domain_frames: 1,
            stride_dt: 8,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs =
            sample_skill_pairs(&ds, &spec, 4, false, &AugmentConfig::identity(), &mut rng).unwrap();
        assert!(pairs.iter().all(|p| p.len() == 1));
    }

    #[test]
    fn success_only_with_no_successes_errors() {
        let mut ds = small_dataset(17);
        for d in &mut ds.demonstrations {
            d.success = false;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(matches!(
            sample_skill_pairs(
                &ds,
                &SkillFrameSpec::default(),
                4,
                true,
                &AugmentConfig::identity(),
                &mut rng
            ),
            Err(DataError::NoEligibleDemo)
        ));
    }

    #[test]
    fn sampling_is_label_free() {
        let ds = small_dataset(18);
        let mut stripped = ds.clone();
        for d in &mut stripped.demonstrations {
            d.task_name = String::new();
        }
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let a = sample_metric_batch(&ds, &BatchSpec::default(), &AugmentConfig::default(), &mut r1)
            .unwrap();
        let b = sample_metric_batch(
            &stripped,
            &BatchSpec::default(),
            &AugmentConfig::default(),
            &mut r2,
        )
        .unwrap();
        for (fa, fb) in a.frames.iter().zip(b.frames.iter()) {
            assert_eq!(fa.pixels, fb.pixels);
        }
        assert_eq!(a.anchor_labels, b.anchor_labels);
    }

    #[test]
    fn sampling_is_deterministic() {
        let ds = small_dataset(19);
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let a = sample_metric_batch(&ds, &BatchSpec::default(), &AugmentConfig::default(), &mut r1)
            .unwrap();
        let b = sample_metric_batch(&ds, &BatchSpec::default(), &AugmentConfig::default(), &mut r2)
            .unwrap();
        for (fa, fb) in a.frames.iter().zip(b.frames.iter()) {
            assert_eq!(fa.pixels, fb.pixels);
        }
    }
}
