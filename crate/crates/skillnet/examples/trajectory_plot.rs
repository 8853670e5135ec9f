//! Embeds every frame of one demonstration and projects the embedding
//! sequence to 2D (exact t-SNE with PCA initialization), writing a PNG where
//! color encodes time. A smooth time-ordered curve indicates the embedding
//! tracks task progress.
//!
//!     cargo run --example trajectory_plot

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skillnet::dataio::{generate_synthetic_dataset, GeneratorConfig, Split};
use skillnet::encoder::{Encoder, EncoderConfig};
use skillnet::evaluation::emit_trajectory_plot;

fn main() -> anyhow::Result<()> {
    let config = GeneratorConfig {
        tasks: vec!["stack".into()],
        demos_per_task: 1,
        fraction_unsuccessful: 0.0,
        frames: 24,
        frame_size: 32,
        split: Split::Train,
    };
    let dataset = generate_synthetic_dataset(&config, 5)?;
    let demo = &dataset.demonstrations[0];

    // a randomly initialized encoder already yields a structured projection;
    // swap in a trained checkpoint for the real picture
    let mut rng = ChaCha8Rng::seed_from_u64(0);
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
    let out = std::path::Path::new("example_out/trajectory.png");
    let points = emit_trajectory_plot(&encoder, demo, out, 0)?;
    println!("projected {} frames -> {}", points.nrows(), out.display());
    Ok(())
}
