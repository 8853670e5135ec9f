//! Trains the skill embedding for a handful of steps on an in-memory
//! synthetic dataset: bounded lifted metric loss over synchronized view
//! pairs, plus the entropy-regularized adversarial discriminator.
//!
//!     cargo run --example train_embedding

use skillnet::config::ExperimentConfig;
use skillnet::dataio::generate_synthetic_dataset;
use skillnet::trainer::fit;

fn main() -> anyhow::Result<()> {
    // shrink everything so the example finishes in seconds on one core
    let cfg = ExperimentConfig::load(
        None,
        &[
            "seed=3".into(),
            "generator.frame_size=32".into(),
            "generator.frames=20".into(),
            "generator.demos_per_task=4".into(),
            "encoder.input_size=32".into(),
            "encoder.embedding_dim=8".into(),
            "encoder.feature_channels=8".into(),
            "discriminator.hidden_dim=32".into(),
            "discriminator.latent_dim=16".into(),
            "batch.num_frames=16".into(),
            "skill.stride_dt=6".into(),
            "trainer.steps=20".into(),
            "trainer.checkpoint_every=10".into(),
            "trainer.skill_batch_size=8".into(),
        ],
    )?;
    let dataset = generate_synthetic_dataset(&cfg.generator, cfg.seed)?;
    let out = std::path::Path::new("example_out/train");
    let output = fit(&dataset, None, &cfg.train_setup(), out, None)?;
    let m = output.final_metrics.expect("ran at least one step");
    println!(
        "step {}: lifted {:.4}  h_cond {:.4}  h_marg {:.4}  kl {:.4}  loss_d {:.4}",
        m.step, m.lifted, m.h_cond, m.h_marg, m.kl, m.loss_d
    );
    println!("checkpoint: {}", output.checkpoint_path.display());
    println!("per-step metrics: {}", output.metrics_path.display());
    Ok(())
}
