//! Trains a control policy on the block world with a reward derived purely
//! from embedding distance to a single demonstration's per-timestep
//! embeddings — no ground-truth state enters the reward.
//!
//!     cargo run --example rl_from_demo

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skillnet::dataio::{generate_synthetic_dataset, GeneratorConfig, Split};
use skillnet::encoder::{Encoder, EncoderConfig};
use skillnet::rl::{train_policy, ppo::PpoConfig, RewardKind, RewardSpec, RlConfig, XiMode};

fn main() -> anyhow::Result<()> {
    let config = GeneratorConfig {
        tasks: vec!["stack".into()],
        demos_per_task: 1,
        fraction_unsuccessful: 0.0,
        frames: 30,
        frame_size: 32,
        split: Split::Train,
    };
    let dataset = generate_synthetic_dataset(&config, 21)?;
    let demo = &dataset.demonstrations[0];
    let task = demo.scenario.clone().expect("generator stores the scenario");

    // an untrained encoder keeps this example fast; in practice load the
    // encoder from a training checkpoint
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let encoder = Encoder::new(
        EncoderConfig {
            input_size: 32,
            embedding_dim: 8,
            feature_channels: 8,
            ..Default::default()
        },
        &mut rng,
    );
    let spec = RewardSpec::from_demo(&encoder, demo, XiMode::Temporal, 1.0)?;
    println!("reward threshold xi = {:.4}", spec.xi_reward);

    let cfg = RlConfig {
        ppo: PpoConfig {
            iterations: 3,
            steps_per_iter: 256,
            hidden: 32,
            ..Default::default()
        },
        horizon: 60,
        demo_reset_prob: 0.5,
        eval_episodes: 2,
        ..Default::default()
    };
    let outcome = train_policy(
        &task,
        Some(demo),
        Some(&encoder),
        &RewardKind::Embedding(spec),
        &cfg,
        32,
        4,
        |it| {
            println!(
                "iter {}  mean return {:>8.2}  success rate {:.2}",
                it.iteration, it.mean_return, it.success_rate
            );
        },
    )?;
    let last = outcome.stats.last().unwrap();
    println!("final success rate: {:.2}", last.success_rate);
    Ok(())
}
