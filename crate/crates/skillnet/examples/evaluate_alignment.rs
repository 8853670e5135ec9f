//! Trains briefly, then scores cross-view temporal alignment on a held-out
//! task the encoder never saw during training. Alignment loss is the mean
//! normalized index error of nearest-neighbor retrieval between the two
//! synchronized views; 0 is perfect, ~1/3 is chance.
//!
//!     cargo run --example evaluate_alignment

use skillnet::checkpoint::Checkpoint;
use skillnet::config::ExperimentConfig;
use skillnet::dataio::{generate_synthetic_dataset, Split};
use skillnet::evaluation::evaluate_transfer;
use skillnet::trainer::fit;

fn main() -> anyhow::Result<()> {
    let cfg = ExperimentConfig::load(
        None,
        &[
            "seed=11".into(),
            "generator.frame_size=32".into(),
            "generator.frames=20".into(),
            "generator.demos_per_task=4".into(),
            "generator.tasks=[\"stack\",\"color_push\"]".into(),
            "encoder.input_size=32".into(),
            "encoder.embedding_dim=8".into(),
            "encoder.feature_channels=8".into(),
            "discriminator.hidden_dim=32".into(),
            "discriminator.latent_dim=16".into(),
            "batch.num_frames=16".into(),
            "skill.stride_dt=6".into(),
            "trainer.steps=30".into(),
            "trainer.skill_batch_size=8".into(),
        ],
    )?;
    let train = generate_synthetic_dataset(&cfg.generator, cfg.seed)?;
    let out = std::path::Path::new("example_out/align");
    let output = fit(&train, None, &cfg.train_setup(), out, None)?;
    let encoder = Checkpoint::load(&output.checkpoint_path)?.encoder;

    // held-out composition task, never seen in training
    let mut held_out = cfg.generator.clone();
    held_out.tasks = vec!["color_stack".into()];
    held_out.split = Split::Test;
    held_out.fraction_unsuccessful = 0.0;
    let test = generate_synthetic_dataset(&held_out, cfg.seed + 1)?;

    let report = evaluate_transfer(&encoder, &test, &[])?;
    println!("{}", report.render());
    Ok(())
}
