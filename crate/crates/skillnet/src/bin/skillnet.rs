//! Experiment command line: dataset synthesis, training, alignment
//! evaluation, embedding visualization, and policy learning.
//!
//! Exit codes: 1 generic failure, 2 unknown configuration key, 3 missing
//! checkpoint or dataset.

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skillnet::checkpoint::Checkpoint;
use skillnet::config::{ConfigError, ExperimentConfig};
use skillnet::dataio::{generate_synthetic_dataset, load_dataset, save_dataset, MultiTaskDataset, Split};
use skillnet::encoder::Encoder;
use skillnet::evaluation::{emit_reward_curve, emit_trajectory_plot, evaluate_transfer};
use skillnet::rl::{train_policy, ObsMode, RewardKind, RewardSpec};
use skillnet::trainer::fit;
use skillnet::world::{sample_task, TaskKind};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_BAD_CONFIG_KEY: u8 = 2;
const EXIT_MISSING_INPUT: u8 = 3;

#[derive(Parser)]
#[command(name = "skillnet", version, about = "Multi-view skill embeddings: data, training, evaluation, RL")]
struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dotted-key overrides, e.g. --set trainer.steps=500
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic multi-view dataset.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated splits to generate.
        #[arg(long, default_value = "train,validation,test", value_delimiter = ',')]
        splits: Vec<String>,
    },
    /// Train the embedding on a generated dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Resume from an existing checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Cross-view temporal alignment on held-out demonstrations.
    EvalAlign {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "validation")]
        split: String,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Optional JSON report destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// 2D embedding-trajectory scatter for one demonstration.
    PlotTsne {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "validation")]
        split: String,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Demonstration id; defaults to the first demonstration.
        #[arg(long)]
        demo: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embedding-distance reward curve along one demonstration.
    PlotReward {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "validation")]
        split: String,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        demo: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a control policy, optionally rewarded through the embedding.
    RlTrain {
        /// Task name (stack, color_push, color_stack, separate_stack).
        #[arg(long)]
        task: String,
        /// Reward signal: embedding, ground-truth, or zero.
        #[arg(long, default_value = "embedding")]
        reward: String,
        /// Encoder checkpoint (required for embedding reward/observations).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Dataset root providing the reference demonstration.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "train")]
        split: String,
        /// Demonstration id; defaults to the first successful one of the task.
        #[arg(long)]
        demo: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum CliError {
    Config(ConfigError),
    MissingInput(String),
    Other(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Other(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let cfg = match ExperimentConfig::load(cli.config.as_deref(), &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return if e.is_unknown_key() {
                ExitCode::from(EXIT_BAD_CONFIG_KEY)
            } else {
                ExitCode::FAILURE
            };
        }
    };
    match run(cli.command, cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(e)) => {
            eprintln!("error: {e}");
            if e.is_unknown_key() {
                ExitCode::from(EXIT_BAD_CONFIG_KEY)
            } else {
                ExitCode::FAILURE
            }
        }
        Err(CliError::MissingInput(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_MISSING_INPUT)
        }
        Err(CliError::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn parse_split(name: &str) -> Result<Split, CliError> {
    match name {
        "train" => Ok(Split::Train),
        "validation" => Ok(Split::Validation),
        "test" => Ok(Split::Test),
        other => Err(CliError::Other(anyhow::anyhow!(
            "unknown split `{other}` (expected train, validation, or test)"
        ))),
    }
}

fn load_split(root: &Path, split: Split) -> Result<MultiTaskDataset, CliError> {
    let dir = root.join(split.dir_name());
    if !dir.is_dir() {
        return Err(CliError::MissingInput(format!(
            "dataset split `{}` not found at {}",
            split,
            dir.display()
        )));
    }
    let outcome = load_dataset(root, split).map_err(anyhow::Error::from)?;
    for rej in &outcome.rejected {
        log::warn!("skipping demonstration: {rej}");
    }
    if outcome.dataset.is_empty() {
        return Err(CliError::MissingInput(format!(
            "dataset split `{split}` at {} contains no demonstrations",
            dir.display()
        )));
    }
    Ok(outcome.dataset)
}

fn load_encoder(path: &Path) -> Result<Encoder, CliError> {
    if !path.is_file() {
        return Err(CliError::MissingInput(format!(
            "checkpoint not found at {}",
            path.display()
        )));
    }
    let ckpt = Checkpoint::load(path).map_err(anyhow::Error::from)?;
    Ok(ckpt.encoder)
}

fn pick_demo<'a>(
    dataset: &'a MultiTaskDataset,
    id: Option<&str>,
) -> Result<&'a skillnet::dataio::Demonstration, CliError> {
    match id {
        Some(id) => dataset
            .demonstrations
            .iter()
            .find(|d| d.demo_id == id)
            .ok_or_else(|| CliError::MissingInput(format!("demonstration `{id}` not found"))),
        None => Ok(&dataset.demonstrations[0]),
    }
}

fn run(command: Command, cfg: ExperimentConfig) -> Result<(), CliError> {
    match command {
        Command::SynthData { out, splits } => {
            cfg.freeze(&out).map_err(CliError::Config)?;
            for (i, name) in splits.iter().enumerate() {
                let split = parse_split(name)?;
                let mut gen = cfg.generator.clone();
                gen.split = split;
                if split != Split::Train {
                    // smaller held-out splits
                    gen.demos_per_task = gen.demos_per_task.div_ceil(4).max(2);
                }
                let seed = cfg.seed.wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(i as u64));
                let ds = generate_synthetic_dataset(&gen, seed).map_err(anyhow::Error::from)?;
                save_dataset(&ds, &out).map_err(anyhow::Error::from)?;
                println!(
                    "wrote {} demonstrations ({} tasks) to {}",
                    ds.len(),
                    ds.tasks.len(),
                    out.join(split.dir_name()).display()
                );
            }
            Ok(())
        }
        Command::Train { data, out, resume } => {
            if let Some(r) = &resume {
                if !r.is_file() {
                    return Err(CliError::MissingInput(format!(
                        "resume checkpoint not found at {}",
                        r.display()
                    )));
                }
            }
            let train = load_split(&data, Split::Train)?;
            let validation = load_dataset(&data, Split::Validation)
                .ok()
                .map(|o| o.dataset)
                .filter(|d| !d.is_empty());
            cfg.freeze(&out).map_err(CliError::Config)?;
            let output = fit(
                &train,
                validation.as_ref(),
                &cfg.train_setup(),
                &out,
                resume.as_deref(),
            )
            .map_err(anyhow::Error::from)?;
            println!("checkpoint: {}", output.checkpoint_path.display());
            if let Some(best) = &output.best_checkpoint_path {
                println!("best (validation alignment): {}", best.display());
            }
            println!("metrics: {}", output.metrics_path.display());
            if let Some(m) = &output.final_metrics {
                println!(
                    "final step {}: lifted {:.4}  h_cond {:.4}  h_marg {:.4}  kl {:.4}",
                    m.step, m.lifted, m.h_cond, m.h_marg, m.kl
                );
            }
            Ok(())
        }
        Command::EvalAlign {
            data,
            split,
            checkpoint,
            out,
        } => {
            let encoder = load_encoder(&checkpoint)?;
            let dataset = load_split(&data, parse_split(&split)?)?;
            let report = evaluate_transfer(&encoder, &dataset, &cfg.evaluation.tasks)
                .map_err(anyhow::Error::from)?;
            println!("{}", report.render());
            if let Some(out) = out {
                if let Some(parent) = out.parent() {
                    std::fs::create_dir_all(parent).map_err(anyhow::Error::from)?;
                }
                serde_json::to_writer_pretty(
                    std::fs::File::create(&out).map_err(anyhow::Error::from)?,
                    &report,
                )
                .map_err(anyhow::Error::from)?;
                println!("report: {}", out.display());
            }
            Ok(())
        }
        Command::PlotTsne {
            data,
            split,
            checkpoint,
            demo,
            out,
        } => {
            let encoder = load_encoder(&checkpoint)?;
            let dataset = load_split(&data, parse_split(&split)?)?;
            let demo = pick_demo(&dataset, demo.as_deref())?;
            emit_trajectory_plot(&encoder, demo, &out, cfg.evaluation.tsne_seed)
                .map_err(anyhow::Error::from)?;
            println!("trajectory plot for `{}`: {}", demo.demo_id, out.display());
            Ok(())
        }
        Command::PlotReward {
            data,
            split,
            checkpoint,
            demo,
            out,
        } => {
            let encoder = load_encoder(&checkpoint)?;
            let dataset = load_split(&data, parse_split(&split)?)?;
            let demo = pick_demo(&dataset, demo.as_deref())?;
            emit_reward_curve(&encoder, demo, &out).map_err(anyhow::Error::from)?;
            println!("reward curve for `{}`: {}", demo.demo_id, out.display());
            Ok(())
        }
        Command::RlTrain {
            task,
            reward,
            checkpoint,
            data,
            split,
            demo,
            out,
        } => {
            let kind = TaskKind::parse(&task)
                .ok_or_else(|| anyhow::anyhow!("unknown task `{task}`"))?;
            let needs_encoder =
                reward == "embedding" || cfg.rl.obs_mode == ObsMode::Embedding;
            let encoder = match (&checkpoint, needs_encoder) {
                (Some(p), _) => Some(load_encoder(p)?),
                (None, true) => {
                    return Err(CliError::MissingInput(
                        "embedding reward/observations require --checkpoint".into(),
                    ))
                }
                (None, false) => None,
            };
            let demo_data = match &data {
                Some(root) => {
                    let dataset = load_split(root, parse_split(&split)?)?;
                    let chosen = match demo.as_deref() {
                        Some(id) => pick_demo(&dataset, Some(id))?.clone(),
                        None => dataset
                            .demonstrations
                            .iter()
                            .find(|d| d.task_name == task && d.success)
                            .cloned()
                            .ok_or_else(|| {
                                CliError::MissingInput(format!(
                                    "no successful `{task}` demonstration in split `{split}`"
                                ))
                            })?,
                    };
                    Some(chosen)
                }
                None => None,
            };
            let reward_kind = match reward.as_str() {
                "ground-truth" => RewardKind::GroundTruth,
                "zero" => RewardKind::Zero,
                "embedding" => {
                    let d = demo_data.as_ref().ok_or_else(|| {
                        CliError::MissingInput(
                            "embedding reward requires --data with a demonstration".into(),
                        )
                    })?;
                    let spec = RewardSpec::from_demo(
                        encoder.as_ref().expect("checked above"),
                        d,
                        cfg.rl.xi_mode,
                        cfg.rl.xi_scale,
                    )
                    .map_err(anyhow::Error::from)?;
                    println!("reward threshold xi = {:.4}", spec.xi_reward);
                    RewardKind::Embedding(spec)
                }
                other => {
                    return Err(CliError::Other(anyhow::anyhow!(
                        "unknown reward `{other}` (expected embedding, ground-truth, or zero)"
                    )))
                }
            };
            // reuse the demonstration's scenario so the reward refers to the
            // exact task instance being solved
            let task_instance = match demo_data.as_ref().and_then(|d| d.scenario.clone()) {
                Some(t) => t,
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    sample_task(kind, &mut rng)
                }
            };
            cfg.freeze(&out).map_err(CliError::Config)?;
            let stats_path = out.join("rl_stats.jsonl");
            let mut stats_file = std::io::BufWriter::new(
                std::fs::File::create(&stats_path).map_err(anyhow::Error::from)?,
            );
            let outcome = train_policy(
                &task_instance,
                demo_data.as_ref(),
                encoder.as_ref(),
                &reward_kind,
                &cfg.rl,
                cfg.generator.frame_size,
                cfg.seed,
                |it| {
                    use std::io::Write;
                    println!(
                        "iter {:>3}  return {:>9.3}  ep_len {:>6.1}  success {:.2}",
                        it.iteration, it.mean_return, it.mean_episode_len, it.success_rate
                    );
                    let _ = writeln!(stats_file, "{}", serde_json::to_string(it).unwrap());
                },
            )
            .map_err(anyhow::Error::from)?;
            let last = outcome.stats.last();
            println!(
                "done: final success rate {:.2} ({})",
                last.map(|s| s.success_rate).unwrap_or(0.0),
                stats_path.display()
            );
            Ok(())
        }
    }
}
