//! Temporary measurement harness (not part of the repo's deliverables):
//! reward-curve monotonicity and embedding-reward policy learning against a
//! trained checkpoint. Delete before release.

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skillnet::checkpoint::Checkpoint;
use skillnet::dataio::{load_dataset, Split};
use skillnet::encoder::{Encoder, EncoderConfig};
use skillnet::evaluation::{embed_view, stats::mann_kendall, stats::spearman};
use skillnet::rl::{ppo::PpoConfig, train_policy, ObsMode, RewardKind, RewardSpec, RlConfig, XiMode};

fn euclid(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    (a - b).mapv(|x| x * x).sum().sqrt()
}

fn main() -> anyhow::Result<()> {
    let ckpt_path = std::env::args().nth(1).unwrap_or("/tmp/smoke/pg64a/checkpoint_latest.json".into());
    let mode = std::env::args().nth(2).unwrap_or("all".into());
    let ckpt = Checkpoint::load(std::path::Path::new(&ckpt_path))?;
    let encoder = ckpt.encoder;
    let held = load_dataset(std::path::Path::new("/tmp/smoke/p64h"), Split::Test)?.dataset;

    if mode == "all" || mode == "spearman" {
        for cross in [false, true] {
            let mut rhos = Vec::new();
            for demo in held.demonstrations.iter().filter(|d| d.success) {
                let emb = embed_view(&encoder, demo, 0);
                let goal = if cross {
                    embed_view(&encoder, demo, 1).last().unwrap().clone()
                } else {
                    emb.last().unwrap().clone()
                };
                let curve: Vec<f64> = emb.iter().map(|e| -euclid(e, &goal)).collect();
                let time: Vec<f64> = (0..curve.len()).map(|t| t as f64).collect();
                rhos.push(spearman(&curve, &time));
            }
            let mean = rhos.iter().sum::<f64>() / rhos.len() as f64;
            let mut sorted = rhos.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            println!(
                "cross={cross} spearman over {} demos: mean {:.3} median {:.3} min {:.3} max {:.3}",
                rhos.len(),
                mean,
                sorted[sorted.len() / 2],
                sorted[0],
                sorted[sorted.len() - 1]
            );
        }
    }

    if mode == "all" || mode == "ppo" {
        let demo = held.demonstrations.iter().find(|d| d.success).unwrap();
        let task = demo.scenario.clone().unwrap();
        let frame_size = demo.frame_size();
        for (label, enc) in [("trained", Some(&encoder)), ("random", None)] {
            let rand_enc;
            let enc = match enc {
                Some(e) => e,
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(999);
                    rand_enc = Encoder::new(EncoderConfig::default(), &mut rng);
                    &rand_enc
                }
            };
            let spec = RewardSpec::from_demo(enc, demo, XiMode::Temporal, 1.0)?;
            println!("{label}: xi_reward {:.4}", spec.xi_reward);
            for seed in 1..=5u64 {
                let cfg = RlConfig {
                    ppo: PpoConfig {
                        iterations: 50,
                        steps_per_iter: 1280,
                        learning_rate: 1e-3,
                        log_std_init: -2.0,
                        ..Default::default()
                    },
                    horizon: 45,
                    obs_mode: ObsMode::Embedding,
                    demo_reset_prob: 0.7,
                    eval_episodes: 1,
                    ..Default::default()
                };
                let t0 = std::time::Instant::now();
                let out = train_policy(
                    &task,
                    Some(demo),
                    Some(enc),
                    &RewardKind::Embedding(spec.clone()),
                    &cfg,
                    frame_size,
                    seed,
                    |_| {},
                )?;
                let returns: Vec<f64> = out.stats.iter().map(|s| s.mean_return).collect();
                let (s, p) = mann_kendall(&returns);
                let best = out
                    .stats
                    .iter()
                    .map(|s| s.success_rate)
                    .fold(0.0f64, f64::max);
                let last5: Vec<f64> = out.stats.iter().rev().take(5).map(|s| s.success_rate).collect();
                println!(
                    "{label} seed {seed}: best succ {best:.1} last5 {last5:?} MK S={s} p={p:.4} ret[0]={:.1} ret[-1]={:.1} ({:.0}s)",
                    returns[0],
                    returns[returns.len() - 1],
                    t0.elapsed().as_secs_f64()
                );
            }
        }
    }
    Ok(())
}
