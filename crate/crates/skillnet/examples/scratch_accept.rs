//! Temporary measurement harness (not part of the repo's deliverables):
//! runs the transfer/ablation training grid used to calibrate the
//! acceptance thresholds. Delete before release.

use skillnet::dataio::{
    generate_synthetic_dataset, AugmentConfig, BatchSpec, GeneratorConfig, MultiTaskDataset,
    SkillFrameSpec, Split,
};
use skillnet::discriminator::DiscriminatorConfig;
use skillnet::encoder::EncoderConfig;
use skillnet::evaluation::{evaluate_transfer, embed_view};
use skillnet::losses::{conditional_entropy, marginal_entropy, LossConfig};
use skillnet::trainer::{train_step, TrainConfig, TrainSetup, TrainState};
use ndarray::{Array1, Array2};

fn asn_setup(seed: u64, steps: u64, adversarial: bool, domain_frames: usize) -> TrainSetup {
    let encoder = EncoderConfig::default();
    let skill = SkillFrameSpec {
        num_domain_frames: domain_frames,
        ..Default::default()
    };
    let discriminator = DiscriminatorConfig {
        input_dim: domain_frames * encoder.embedding_dim,
        ..Default::default()
    };
    TrainSetup {
        seed,
        encoder,
        discriminator,
        losses: LossConfig::default(),
        trainer: TrainConfig {
            steps,
            adversarial,
            checkpoint_every: 0,
            validate_every: 0,
            ..Default::default()
        },
        batch: BatchSpec::default(),
        skill,
        augment: AugmentConfig::default(),
    }
}

fn heldout_entropies(
    state: &TrainState,
    ds: &MultiTaskDataset,
    skill: &SkillFrameSpec,
) -> (f64, f64) {
    let dim = state.encoder.embedding_dim();
    let nf = skill.num_domain_frames;
    let span = (nf - 1) * skill.stride_dt;
    let mut rows: Vec<Array1<f64>> = Vec::new();
    for demo in ds.demonstrations.iter().filter(|d| d.success) {
        let emb = embed_view(&state.encoder, demo, 0);
        let frames = emb.len();
        if frames <= span {
            continue;
        }
        let mut t = 0;
        while t + span < frames {
            let mut w = Vec::with_capacity(nf * dim);
            for j in 0..nf {
                w.extend(emb[t + j * skill.stride_dt].iter().cloned());
            }
            let g = state.discriminator.encode_latent(&Array1::from(w));
            rows.push(state.discriminator.classify(&g.mu).probs);
            t += 3;
        }
    }
    let probs = Array2::from_shape_fn((rows.len(), rows[0].len()), |(i, j)| rows[i][j]);
    (conditional_entropy(&probs), marginal_entropy(&probs))
}

fn main() -> anyhow::Result<()> {
    let steps: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1000);
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

    for (label, adversarial, nf) in [
        ("asn_2f", true, 2usize),
        ("metric", false, 2),
        ("asn_1f", true, 1),
    ] {
        for seed in 1..=3u64 {
            let setup = asn_setup(seed, steps, adversarial, nf);
            let t0 = std::time::Instant::now();
            let mut state = TrainState::new(&setup)?;
            while state.step < setup.trainer.steps {
                train_step(&mut state, &train_ds, &setup)?;
                if label == "asn_2f" && seed == 1 && (state.step % 100 == 0 || state.step == 1) {
                    let (hc, hm) = heldout_entropies(&state, &held_out, &setup.skill);
                    println!(
                        "probe step {:>4}  h_cond {:.4}  h_marg {:.4}",
                        state.step, hc, hm
                    );
                }
            }
            let report = evaluate_transfer(&state.encoder, &held_out, &[])?;
            println!(
                "{label} seed {seed}: alignment {:.4}  ({:.1}s)",
                report.mean,
                t0.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
