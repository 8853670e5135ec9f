//! Plots the embedding-derived reward along one demonstration: negative
//! embedding distance to the final (goal) frame, min-max normalized. For a
//! useful embedding the curve rises as the demonstration approaches its goal.
//!
//!     cargo run --example reward_curve

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skillnet::dataio::{generate_synthetic_dataset, GeneratorConfig, Split};
use skillnet::encoder::{Encoder, EncoderConfig};
use skillnet::evaluation::emit_reward_curve;

fn main() -> anyhow::Result<()> {
    let config = GeneratorConfig {
        tasks: vec!["color_push".into()],
        demos_per_task: 1,
        fraction_unsuccessful: 0.0,
        frames: 24,
        frame_size: 32,
        split: Split::Train,
    };
    let dataset = generate_synthetic_dataset(&config, 13)?;
    let demo = &dataset.demonstrations[0];

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let encoder = Encoder::new(
        EncoderConfig {
            input_size: 32,
            embedding_dim: 8,
            feature_channels: 8,
            ..Default::default()
        },
        &mut rng,
    );

    std::fs::create_dir_all("example_out")?;
    let out = std::path::Path::new("example_out/reward_curve.png");
    let curve = emit_reward_curve(&encoder, demo, out)?;
    println!("reward at start {:.3}, at goal {:.3} -> {}", curve[0], curve[curve.len() - 1], out.display());
    Ok(())
}
