//! Adversarial training loop: alternating discriminator descent and encoder
//! ascent with metric batches, skill windows, checkpointing and a JSONL
//! metrics trace.

use crate::checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_FORMAT_VERSION};
use crate::dataio::{
    frames_to_batch, sample_metric_batch, sample_skill_pairs, AugmentConfig, BatchSpec, DataError,
    Frame, MultiTaskDataset, MultiViewBatch, SkillFrameSpec,
};
use crate::discriminator::{Discriminator, DiscriminatorConfig};
use crate::encoder::{Encoder, EncoderConfig};
use crate::losses::{
    discriminator_loss, discriminator_loss_grad_probs, encoder_entropy_grad_probs, encoder_loss,
    lifted_loss, npair_loss, triplet_loss, LossConfig, LossError, PairStructure,
};
use crate::nn::{standard_normal, AdamState};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("loss error: {0}")]
    Loss(#[from] LossError),
    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("non-finite {quantity} at step {step}; {diagnostics}")]
    NonFinite {
        quantity: String,
        step: u64,
        diagnostics: String,
    },
    #[error("invalid training setup: {0}")]
    BadSetup(String),
}

/// Which metric loss drives the encoder (comparison axis).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricLossKind {
    /// Bounded lifted formulation (the default objective).
    BoundedLifted,
    /// Lifted formulation without the similarity bound.
    Lifted,
    Triplet,
    Npair,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: u64,
    pub learning_rate: f64,
    /// Skill windows per discriminator batch.
    pub skill_batch_size: usize,
    /// `[encoder_updates, discriminator_updates]` per logical step.
    pub update_ratio: [u32; 2],
    /// Restrict discriminator skill batches to successful demonstrations.
    pub success_only: bool,
    /// With this off the run degenerates to plain metric learning: no
    /// discriminator updates and no entropy terms in the encoder objective.
    pub adversarial: bool,
    pub metric_loss: MetricLossKind,
    pub checkpoint_every: u64,
    /// Validation alignment cadence; 0 disables best-checkpoint tracking.
    pub validate_every: u64,
    /// Demonstrations scored per validation pass (0 = all).
    pub validate_max_demos: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            learning_rate: 1e-3,
            skill_batch_size: 16,
            update_ratio: [1, 1],
            success_only: true,
            adversarial: true,
            metric_loss: MetricLossKind::BoundedLifted,
            checkpoint_every: 250,
            validate_every: 0,
            validate_max_demos: 8,
        }
    }
}

/// Everything a run needs; a frozen copy is embedded into checkpoints so a
/// resume can verify it trains the same experiment.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSetup {
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub discriminator: DiscriminatorConfig,
    pub losses: LossConfig,
    pub trainer: TrainConfig,
    pub batch: BatchSpec,
    pub skill: SkillFrameSpec,
    pub augment: AugmentConfig,
}

/// Per-step scalar metrics. `wall_ms` is informational only and excluded from
/// determinism comparisons.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub lifted: f64,
    pub h_cond: f64,
    pub h_marg: f64,
    pub kl: f64,
    pub loss_d: f64,
    pub loss_e: f64,
    pub wall_ms: f64,
}

/// Mutable training state: both networks, their optimizers, and the rng
/// streams (data sampling and noise draws are kept separate so batch order
/// is independent of latent sampling).
pub struct TrainState {
    pub encoder: Encoder,
    pub discriminator: Discriminator,
    pub encoder_opt: AdamState,
    pub discriminator_opt: AdamState,
    pub data_rng: ChaCha8Rng,
    pub noise_rng: ChaCha8Rng,
    pub step: u64,
}

impl TrainState {
    pub fn new(setup: &TrainSetup) -> Result<Self, TrainError> {
        let skill_len = setup.skill.num_domain_frames * setup.encoder.embedding_dim;
        if setup.discriminator.input_dim != skill_len {
            return Err(TrainError::BadSetup(format!(
                "discriminator input_dim {} != num_domain_frames * embedding_dim = {}",
                setup.discriminator.input_dim, skill_len
            )));
        }
        let mut init_rng = ChaCha8Rng::seed_from_u64(setup.seed);
        let encoder = Encoder::new(setup.encoder.clone(), &mut init_rng);
        let discriminator = Discriminator::new(setup.discriminator.clone(), &mut init_rng);
        let lr = setup.trainer.learning_rate;
        let encoder_opt = AdamState::new(encoder.num_params(), lr);
        let discriminator_opt = AdamState::new(discriminator.num_params(), lr);
        Ok(Self {
            encoder,
            discriminator,
            encoder_opt,
            discriminator_opt,
            data_rng: ChaCha8Rng::seed_from_u64(setup.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)),
            noise_rng: ChaCha8Rng::seed_from_u64(setup.seed.wrapping_add(0x5851_f42d_4c95_7f2d)),
            step: 0,
        })
    }

    fn to_checkpoint(&self, config: serde_json::Value) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            step: self.step,
            config,
            encoder: self.encoder.clone(),
            discriminator: Some(self.discriminator.clone()),
            encoder_opt: Some(self.encoder_opt.clone()),
            discriminator_opt: Some(self.discriminator_opt.clone()),
            data_rng: Some(serde_json::to_vec(&self.data_rng).unwrap()),
            noise_rng: Some(serde_json::to_vec(&self.noise_rng).unwrap()),
        }
    }

    /// Rebuilds a state from a training checkpoint, verifying the setup echo.
    pub fn from_checkpoint(ckpt: Checkpoint, setup: &TrainSetup) -> Result<Self, TrainError> {
        let expected = serde_json::to_value(setup).unwrap();
        if ckpt.config != expected {
            return Err(TrainError::Checkpoint(CheckpointError::ConfigMismatch(
                "checkpoint was written by a run with a different configuration".into(),
            )));
        }
        let missing = |what: &str| {
            TrainError::Checkpoint(CheckpointError::ConfigMismatch(format!(
                "checkpoint lacks {what}; it was stripped for deployment and cannot resume"
            )))
        };
        Ok(Self {
            step: ckpt.step,
            encoder: ckpt.encoder,
            discriminator: ckpt.discriminator.ok_or_else(|| missing("discriminator"))?,
            encoder_opt: ckpt.encoder_opt.ok_or_else(|| missing("encoder optimizer"))?,
            discriminator_opt: ckpt
                .discriminator_opt
                .ok_or_else(|| missing("discriminator optimizer"))?,
            data_rng: serde_json::from_slice(&ckpt.data_rng.ok_or_else(|| missing("rng state"))?)
                .map_err(CheckpointError::Serde)?,
            noise_rng: serde_json::from_slice(
                &ckpt.noise_rng.ok_or_else(|| missing("rng state"))?,
            )
            .map_err(CheckpointError::Serde)?,
        })
    }
}

fn metric_loss(
    kind: MetricLossKind,
    embeddings: &Array2<f64>,
    structure: &PairStructure,
    cfg: &LossConfig,
) -> Result<(f64, Array2<f64>), LossError> {
    match kind {
        MetricLossKind::BoundedLifted => lifted_loss(embeddings, structure, cfg),
        MetricLossKind::Lifted => {
            let unbounded = LossConfig {
                bound_positive: false,
                ..cfg.clone()
            };
            lifted_loss(embeddings, structure, &unbounded)
        }
        MetricLossKind::Triplet => triplet_loss(embeddings, structure, cfg),
        MetricLossKind::Npair => npair_loss(embeddings, structure, cfg),
    }
}

fn check_finite(
    value: f64,
    quantity: &str,
    step: u64,
    embeddings: &Array2<f64>,
) -> Result<(), TrainError> {
    if value.is_finite() {
        return Ok(());
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut nans = 0usize;
    for &v in embeddings.iter() {
        if v.is_nan() {
            nans += 1;
        } else {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    Err(TrainError::NonFinite {
        quantity: quantity.to_string(),
        step,
        diagnostics: format!(
            "batch embeddings: shape {:?}, min {lo:.4e}, max {hi:.4e}, nan count {nans}",
            embeddings.shape()
        ),
    })
}

/// One update cycle: `update_ratio[1]` discriminator steps followed by
/// `update_ratio[0]` encoder steps, each on freshly sampled batches. Returns
/// the metrics of the final encoder step.
pub fn train_step(
    state: &mut TrainState,
    dataset: &MultiTaskDataset,
    setup: &TrainSetup,
) -> Result<StepMetrics, TrainError> {
    let t0 = std::time::Instant::now();
    let cfg = &setup.trainer;
    let mut h_cond = 0.0;
    let mut h_marg = 0.0;
    let mut kl = 0.0;
    let mut loss_d = 0.0;

    if cfg.adversarial {
        for _ in 0..cfg.update_ratio[1] {
            let (inputs, _, _) = embed_skill_windows(state, dataset, setup)?;
            let eps = draw_epsilon(state, inputs.nrows(), setup);
            let mut dropout_rng = state.noise_rng.clone();
            state.noise_rng = fork_rng(&mut state.noise_rng);
            let cache = state.discriminator.forward_cached(
                &inputs,
                eps.as_ref(),
                Some(&mut dropout_rng),
            );
            kl = cache.mean_kl();
            h_cond = crate::losses::conditional_entropy(&cache.probs);
            h_marg = crate::losses::marginal_entropy(&cache.probs);
            loss_d = discriminator_loss(&cache.probs, kl, &setup.losses);
            check_finite(loss_d, "discriminator loss", state.step, &inputs)?;
            let grad_probs = discriminator_loss_grad_probs(&cache.probs, &setup.losses);
            state.discriminator.zero_grad();
            state
                .discriminator
                .backward(&cache, &grad_probs, setup.losses.beta);
            let mut params = state.discriminator.params_flat();
            let grads = state.discriminator.grads_flat();
            state.discriminator_opt.step(&mut params, &grads);
            state.discriminator.set_params(&params);
        }
    }

    let mut lifted_value = 0.0;
    let mut loss_e = 0.0;
    for _ in 0..cfg.update_ratio[0] {
        let metric = sample_metric_batch(dataset, &setup.batch, &setup.augment, &mut state.data_rng)?;
        let (embeddings, cache) = state.encoder.forward_cached(&frames_to_batch(&metric.frames));
        let structure = batch_structure(&metric);
        let (value, grad_emb) =
            metric_loss(cfg.metric_loss, &embeddings, &structure, &setup.losses)?;
        lifted_value = value;
        check_finite(value, "metric loss", state.step, &embeddings)?;
        state.encoder.zero_grad();
        // the trainer descends on the negated encoder objective, so the
        // metric term enters with +alpha
        let alpha = if cfg.adversarial { setup.losses.alpha } else { 1.0 };
        state.encoder.backward(&cache, &(grad_emb * alpha));
        loss_e = -value * if cfg.adversarial { setup.losses.alpha } else { 1.0 };

        if cfg.adversarial {
            let (inputs, skill_cache, num_frames) = embed_skill_windows(state, dataset, setup)?;
            let eps = draw_epsilon(state, inputs.nrows(), setup);
            let mut dropout_rng = state.noise_rng.clone();
            state.noise_rng = fork_rng(&mut state.noise_rng);
            let dcache = state.discriminator.forward_cached(
                &inputs,
                eps.as_ref(),
                Some(&mut dropout_rng),
            );
            loss_e = encoder_loss(&dcache.probs, value, &setup.losses);
            check_finite(loss_e, "encoder loss", state.step, &inputs)?;
            // descend on -L_E: the entropy terms enter negated
            let grad_probs = -encoder_entropy_grad_probs(&dcache.probs, &setup.losses);
            let g_inputs = state.discriminator.backward(&dcache, &grad_probs, 0.0);
            // the discriminator is frozen during the encoder step; its
            // accumulated weight gradients are discarded
            state.discriminator.zero_grad();
            let dim = state.encoder.embedding_dim();
            let rows = inputs.nrows() * setup.skill.num_domain_frames;
            debug_assert_eq!(rows, num_frames);
            let g_frames = Array2::from_shape_fn((rows, dim), |(r, d)| {
                let window = r / setup.skill.num_domain_frames;
                let slot = r % setup.skill.num_domain_frames;
                g_inputs[[window, slot * dim + d]]
            });
            state.encoder.backward(&skill_cache.1, &g_frames);
        }

        let mut params = state.encoder.params_flat();
        let grads = state.encoder.grads_flat();
        state.encoder_opt.step(&mut params, &grads);
        state.encoder.set_params(&params);
    }

    state.step += 1;
    Ok(StepMetrics {
        step: state.step,
        lifted: lifted_value,
        h_cond,
        h_marg,
        kl,
        loss_d,
        loss_e,
        wall_ms: t0.elapsed().as_secs_f64() * 1e3,
    })
}

/// Samples skill windows, embeds their frames in one encoder pass, and lays
/// the embeddings out as one concatenated row per window.
fn embed_skill_windows(
    state: &mut TrainState,
    dataset: &MultiTaskDataset,
    setup: &TrainSetup,
) -> Result<(Array2<f64>, (Array2<f64>, crate::encoder::EncoderCache), usize), TrainError> {
    let tuples = sample_skill_pairs(
        dataset,
        &setup.skill,
        setup.trainer.skill_batch_size,
        setup.trainer.success_only,
        &setup.augment,
        &mut state.data_rng,
    )?;
    let flat: Vec<Frame> = tuples.iter().flat_map(|t| t.iter().cloned()).collect();
    let (embeddings, cache) = state.encoder.forward_cached(&frames_to_batch(&flat));
    let nf = setup.skill.num_domain_frames;
    let dim = state.encoder.embedding_dim();
    let inputs = Array2::from_shape_fn((tuples.len(), nf * dim), |(w, c)| {
        embeddings[[w * nf + c / dim, c % dim]]
    });
    let num_frames = flat.len();
    Ok((inputs, (embeddings, cache), num_frames))
}

fn draw_epsilon(state: &mut TrainState, rows: usize, setup: &TrainSetup) -> Option<Array2<f64>> {
    match setup.discriminator.latent {
        crate::discriminator::LatentKind::Kl => {
            let k = setup.discriminator.latent_dim;
            let flat = standard_normal(rows * k, &mut state.noise_rng);
            Some(Array2::from_shape_fn((rows, k), |(i, j)| flat[i * k + j]))
        }
        crate::discriminator::LatentKind::Fc => None,
    }
}

/// Splits off an independent rng stream so consumption by a cloned rng (e.g.
/// the dropout mask) cannot silently desynchronize the parent.
fn fork_rng(rng: &mut ChaCha8Rng) -> ChaCha8Rng {
    use rand::Rng;
    ChaCha8Rng::seed_from_u64(rng.gen())
}

fn batch_structure(batch: &MultiViewBatch) -> PairStructure<'_> {
    PairStructure {
        labels: &batch.anchor_labels,
        pair_ids: &batch.source_pair_ids,
        time_indices: &batch.time_indices,
    }
}

/// Paths produced by a completed `fit` run.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub checkpoint_path: PathBuf,
    pub best_checkpoint_path: Option<PathBuf>,
    pub metrics_path: PathBuf,
    pub final_metrics: Option<StepMetrics>,
}

/// Runs (or resumes) a full training loop, writing periodic checkpoints and
/// appending one JSONL metrics record per step.
pub fn fit(
    dataset: &MultiTaskDataset,
    validation: Option<&MultiTaskDataset>,
    setup: &TrainSetup,
    out_dir: &Path,
    resume_from: Option<&Path>,
) -> Result<FitOutput, TrainError> {
    std::fs::create_dir_all(out_dir)?;
    let config_echo = serde_json::to_value(setup).unwrap();
    let mut state = match resume_from {
        Some(path) => TrainState::from_checkpoint(Checkpoint::load(path)?, setup)?,
        None => TrainState::new(setup)?,
    };
    let checkpoint_path = out_dir.join("checkpoint_latest.json");
    let best_path = out_dir.join("checkpoint_best.json");
    let metrics_path = out_dir.join("metrics.jsonl");
    let mut metrics_file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&metrics_path)?;

    state.to_checkpoint(config_echo.clone()).save(&checkpoint_path)?;
    let mut best_alignment = f64::INFINITY;
    let mut wrote_best = false;
    let mut final_metrics = None;

    while state.step < setup.trainer.steps {
        let metrics = train_step(&mut state, dataset, setup)?;
        serde_json::to_writer(&mut metrics_file, &metrics).map_err(CheckpointError::Serde)?;
        metrics_file.write_all(b"\n")?;
        let at_checkpoint = setup.trainer.checkpoint_every > 0
            && state.step % setup.trainer.checkpoint_every == 0;
        if at_checkpoint || state.step == setup.trainer.steps {
            state.to_checkpoint(config_echo.clone()).save(&checkpoint_path)?;
        }
        let at_validate =
            setup.trainer.validate_every > 0 && state.step % setup.trainer.validate_every == 0;
        if at_validate {
            if let Some(val) = validation {
                let score = validation_alignment(&state.encoder, val, setup.trainer.validate_max_demos);
                log::info!("step {}: validation alignment {:.4}", state.step, score);
                if score < best_alignment {
                    best_alignment = score;
                    state.to_checkpoint(config_echo.clone()).save(&best_path)?;
                    wrote_best = true;
                }
            }
        }
        final_metrics = Some(metrics);
    }
    state.to_checkpoint(config_echo.clone()).save(&checkpoint_path)?;
    Ok(FitOutput {
        checkpoint_path,
        best_checkpoint_path: wrote_best.then(|| best_path),
        metrics_path,
        final_metrics,
    })
}

/// Mean cross-view alignment loss over (at most) the first `max_demos`
/// validation demonstrations.
fn validation_alignment(
    encoder: &Encoder,
    dataset: &MultiTaskDataset,
    max_demos: usize,
) -> f64 {
    let limit = if max_demos == 0 {
        dataset.len()
    } else {
        max_demos.min(dataset.len())
    };
    let mut total = 0.0;
    let mut count = 0usize;
    for demo in dataset.demonstrations.iter().take(limit) {
        let v0 = crate::evaluation::embed_view(encoder, demo, 0);
        let v1 = crate::evaluation::embed_view(encoder, demo, 1);
        if let (Ok(a), Ok(b)) = (
            crate::evaluation::alignment_loss(&v0, &v1),
            crate::evaluation::alignment_loss(&v1, &v0),
        ) {
            total += 0.5 * (a.value + b.value);
            count += 1;
        }
    }
    if count == 0 {
        f64::INFINITY
    } else {
        total / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate_synthetic_dataset, GeneratorConfig, Split};

    fn tiny_setup() -> TrainSetup {
        let encoder = EncoderConfig {
            input_size: 32,
            embedding_dim: 8,
            feature_channels: 8,
            ..Default::default()
        };
        let discriminator = DiscriminatorConfig {
            input_dim: 16,
            latent_dim: 8,
            hidden_dim: 16,
            num_classes: 2,
            ..Default::default()
        };
        TrainSetup {
            seed: 5,
            encoder,
            discriminator,
            losses: LossConfig::default(),
            trainer: TrainConfig {
                steps: 2,
                skill_batch_size: 4,
                checkpoint_every: 1,
                ..Default::default()
            },
            batch: BatchSpec {
                num_frames: 8,
                num_view_pairs: 2,
                temporal_window: 0,
            },
            skill: SkillFrameSpec::default(),
            augment: AugmentConfig::identity(),
        }
    }

    fn tiny_dataset(seed: u64) -> MultiTaskDataset {
        generate_synthetic_dataset(
            &GeneratorConfig {
                tasks: vec!["stack".into()],
                demos_per_task: 3,
                fraction_unsuccessful: 0.0,
                frames: 20,
                frame_size: 32,
                split: Split::Train,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn train_step_produces_finite_metrics_and_changes_params() {
        let setup = tiny_setup();
        let ds = tiny_dataset(1);
        let mut state = TrainState::new(&setup).unwrap();
        let p_enc = state.encoder.params_flat();
        let p_disc = state.discriminator.params_flat();
        let m = train_step(&mut state, &ds, &setup).unwrap();
        for v in [m.lifted, m.h_cond, m.h_marg, m.kl, m.loss_d, m.loss_e] {
            assert!(v.is_finite());
        }
        assert!(m.kl >= 0.0);
        assert_ne!(state.encoder.params_flat(), p_enc);
        assert_ne!(state.discriminator.params_flat(), p_disc);
    }

    #[test]
    fn non_adversarial_mode_leaves_discriminator_untouched() {
        let mut setup = tiny_setup();
        setup.trainer.adversarial = false;
        let ds = tiny_dataset(2);
        let mut state = TrainState::new(&setup).unwrap();
        let p_disc = state.discriminator.params_flat();
        let m = train_step(&mut state, &ds, &setup).unwrap();
        assert_eq!(state.discriminator.params_flat(), p_disc);
        assert_eq!(m.loss_d, 0.0);
        assert_eq!(m.kl, 0.0);
    }

    #[test]
    fn optimizers_are_disjoint() {
        // an encoder step must not move discriminator weights and vice versa;
        // run a full adversarial step and check each side only moved under
        // its own optimizer by replaying the updates
        let setup = tiny_setup();
        let ds = tiny_dataset(3);
        let mut s1 = TrainState::new(&setup).unwrap();
        let mut s2 = TrainState::new(&setup).unwrap();
        train_step(&mut s1, &ds, &setup).unwrap();
        train_step(&mut s2, &ds, &setup).unwrap();
        // identical rng streams: both replicas agree, so neither side can be
        // leaking unsynchronized gradient into the other
        assert_eq!(s1.encoder.params_flat(), s2.encoder.params_flat());
        assert_eq!(s1.discriminator.params_flat(), s2.discriminator.params_flat());
    }

    #[test]
    fn fit_writes_checkpoint_and_metrics() {
        let setup = tiny_setup();
        let ds = tiny_dataset(4);
        let dir = tempfile::tempdir().unwrap();
        let out = fit(&ds, None, &setup, dir.path(), None).unwrap();
        assert!(out.checkpoint_path.exists());
        let text = std::fs::read_to_string(&out.metrics_path).unwrap();
        assert_eq!(text.lines().count(), 2);
        let ckpt = Checkpoint::load(&out.checkpoint_path).unwrap();
        assert_eq!(ckpt.step, 2);
    }

    #[test]
    fn zero_steps_writes_initial_checkpoint() {
        let mut setup = tiny_setup();
        setup.trainer.steps = 0;
        let ds = tiny_dataset(5);
        let dir = tempfile::tempdir().unwrap();
        let out = fit(&ds, None, &setup, dir.path(), None).unwrap();
        let ckpt = Checkpoint::load(&out.checkpoint_path).unwrap();
        assert_eq!(ckpt.step, 0);
        let fresh = TrainState::new(&setup).unwrap();
        assert_eq!(ckpt.encoder.params_flat(), fresh.encoder.params_flat());
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let mut setup = tiny_setup();
        setup.trainer.steps = 3;
        setup.trainer.checkpoint_every = 2;
        let ds = tiny_dataset(6);

        let full_dir = tempfile::tempdir().unwrap();
        let full = fit(&ds, None, &setup, full_dir.path(), None).unwrap();
        let full_ckpt = Checkpoint::load(&full.checkpoint_path).unwrap();

        let mut part = setup.clone();
        part.trainer.steps = 2;
        let part_dir = tempfile::tempdir().unwrap();
        let partial = fit(&ds, None, &part, part_dir.path(), None).unwrap();
        // the config echo must match for resume; rewrite it as the 3-step one
        let mut ckpt = Checkpoint::load(&partial.checkpoint_path).unwrap();
        ckpt.config = serde_json::to_value(&setup).unwrap();
        ckpt.save(&partial.checkpoint_path).unwrap();

        let resume_dir = tempfile::tempdir().unwrap();
        let resumed = fit(&ds, None, &setup, resume_dir.path(), Some(&partial.checkpoint_path))
            .unwrap();
        let resumed_ckpt = Checkpoint::load(&resumed.checkpoint_path).unwrap();
        assert_eq!(resumed_ckpt.step, 3);
        assert_eq!(
            resumed_ckpt.encoder.params_flat(),
            full_ckpt.encoder.params_flat()
        );
    }

    #[test]
    fn resume_refuses_mismatched_config() {
        let setup = tiny_setup();
        let ds = tiny_dataset(7);
        let dir = tempfile::tempdir().unwrap();
        let out = fit(&ds, None, &setup, dir.path(), None).unwrap();
        let mut other = setup.clone();
        other.losses.alpha = 0.9;
        let dir2 = tempfile::tempdir().unwrap();
        let err = fit(&ds, None, &other, dir2.path(), Some(&out.checkpoint_path));
        assert!(matches!(
            err,
            Err(TrainError::Checkpoint(CheckpointError::ConfigMismatch(_)))
        ));
    }

    #[test]
    fn mismatched_discriminator_input_rejected() {
        let mut setup = tiny_setup();
        setup.discriminator.input_dim = 7;
        assert!(matches!(
            TrainState::new(&setup),
            Err(TrainError::BadSetup(_))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let setup = tiny_setup();
        let ds = tiny_dataset(8);
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let o1 = fit(&ds, None, &setup, d1.path(), None).unwrap();
        let o2 = fit(&ds, None, &setup, d2.path(), None).unwrap();
        let strip = |p: &Path| -> Vec<serde_json::Value> {
            std::fs::read_to_string(p)
                .unwrap()
                .lines()
                .map(|l| {
                    let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                    v.as_object_mut().unwrap().remove("wall_ms");
                    v
                })
                .collect()
        };
        assert_eq!(strip(&o1.metrics_path), strip(&o2.metrics_path));
    }
}
