//! Temporary measurement harness (not part of the repo's deliverables):
//! config sweep scoring held-out alignment and reward-curve monotonicity.
//! Delete before release.

use ndarray::Array1;
use skillnet::dataio::{
    generate_synthetic_dataset, AugmentConfig, BatchSpec, GeneratorConfig, MultiTaskDataset,
    SkillFrameSpec, Split,
};
use skillnet::discriminator::DiscriminatorConfig;
use skillnet::encoder::{Encoder, EncoderConfig};
use skillnet::evaluation::{embed_view, evaluate_transfer, stats::spearman};
use skillnet::losses::LossConfig;
use skillnet::trainer::{train_step, TrainConfig, TrainSetup, TrainState};

fn euclid(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    (a - b).mapv(|x| x * x).sum().sqrt()
}

fn spearman_goal(encoder: &Encoder, ds: &MultiTaskDataset) -> (f64, f64) {
    let mut rhos = Vec::new();
    for demo in ds.demonstrations.iter().filter(|d| d.success) {
        let emb = embed_view(encoder, demo, 0);
        let goal = embed_view(encoder, demo, 1).last().unwrap().clone();
        let curve: Vec<f64> = emb.iter().map(|e| -euclid(e, &goal)).collect();
        let time: Vec<f64> = (0..curve.len()).map(|t| t as f64).collect();
        rhos.push(spearman(&curve, &time));
    }
    let mean = rhos.iter().sum::<f64>() / rhos.len() as f64;
    let min = rhos.iter().cloned().fold(f64::INFINITY, f64::min);
    (mean, min)
}

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let steps: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let dim: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(32);
    let fc: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(32);
    let neg_margin: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(2);
    let l2: bool = args.get(5).map(|s| s == "l2").unwrap_or(false);
    let alpha: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let window: usize = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(8);
    let adversarial: bool = args.get(8).map(|s| s != "metric").unwrap_or(true);
    let lr: f64 = args.get(9).and_then(|s| s.parse().ok()).unwrap_or(1e-3);

    let train_ds = generate_synthetic_dataset(&GeneratorConfig::default(), 11)?;
    let held_out = generate_synthetic_dataset(
        &GeneratorConfig {
            tasks: vec!["color_stack".into()],
            demos_per_task: 20,
            fraction_unsuccessful: 0.0,
            split: Split::Test,
            ..Default::default()
        },
        42,
    )?;

    let encoder = EncoderConfig {
        embedding_dim: dim,
        feature_channels: fc,
        l2_normalize: l2,
        ..Default::default()
    };
    let setup = TrainSetup {
        seed: 1,
        encoder: encoder.clone(),
        discriminator: DiscriminatorConfig {
            input_dim: 2 * dim,
            ..Default::default()
        },
        losses: LossConfig {
            negative_margin: neg_margin,
            alpha,
            ..Default::default()
        },
        trainer: TrainConfig {
            steps,
            adversarial,
            learning_rate: lr,
            checkpoint_every: 0,
            validate_every: 0,
            ..Default::default()
        },
        batch: BatchSpec { temporal_window: window, ..Default::default() },
        skill: SkillFrameSpec::default(),
        augment: AugmentConfig::default(),
    };
    let t0 = std::time::Instant::now();
    let mut state = TrainState::new(&setup)?;
    while state.step < setup.trainer.steps {
        train_step(&mut state, &train_ds, &setup)?;
        if state.step % 250 == 0 {
            let rep = evaluate_transfer(&state.encoder, &held_out, &[])?;
            let (sm, smin) = spearman_goal(&state.encoder, &held_out);
            println!(
                "dim{dim} fc{fc} nm{neg_margin} l2={l2} a{alpha} w{window} adv={adversarial} lr{lr} step {:>4}: align {:.4} spearman mean {:.3} min {:.3} ({:.0}s)",
                state.step,
                rep.mean,
                sm,
                smin,
                t0.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
