//! Experiment configuration: one TOML file covering data generation,
//! training, evaluation, and policy learning, with dotted-key command-line
//! overrides. Unknown keys anywhere are hard errors so typos never silently
//! fall back to defaults.

use crate::dataio::{AugmentConfig, BatchSpec, GeneratorConfig, SkillFrameSpec};
use crate::discriminator::DiscriminatorConfig;
use crate::encoder::EncoderConfig;
use crate::losses::LossConfig;
use crate::rl::RlConfig;
use crate::trainer::{TrainConfig, TrainSetup};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("override `{0}` is not of the form key=value")]
    BadOverride(String),
    #[error("override value `{1}` for `{0}` is not valid TOML")]
    BadOverrideValue(String, String),
}

impl ConfigError {
    /// True for errors caused by a key the schema does not know.
    pub fn is_unknown_key(&self) -> bool {
        match self {
            ConfigError::UnknownKey(_) => true,
            ConfigError::Parse(e) => e.to_string().contains("unknown field"),
            _ => false,
        }
    }
}

/// Evaluation-side knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    /// Restrict alignment evaluation to these tasks; empty means all.
    pub tasks: Vec<String>,
    pub tsne_perplexity: f64,
    pub tsne_iters: usize,
    pub tsne_seed: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            tasks: Vec::new(),
            tsne_perplexity: 10.0,
            tsne_iters: 300,
            tsne_seed: 0,
        }
    }
}

/// Root configuration for every subcommand.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub generator: GeneratorConfig,
    pub augment: AugmentConfig,
    pub batch: BatchSpec,
    pub skill: SkillFrameSpec,
    pub encoder: EncoderConfig,
    pub discriminator: DiscriminatorConfig,
    pub losses: LossConfig,
    pub trainer: TrainConfig,
    pub evaluation: EvaluationConfig,
    pub rl: RlConfig,
}

impl ExperimentConfig {
    /// Loads a TOML file, then applies dotted `section.key=value` overrides.
    /// A missing path yields the defaults (overrides still apply).
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut value: toml::Value = match path {
            Some(p) => std::fs::read_to_string(p)?.parse()?,
            None => toml::Value::Table(Default::default()),
        };
        for ov in overrides {
            apply_override(&mut value, ov)?;
        }
        let cfg: ExperimentConfig = value.try_into().map_err(ConfigError::Parse)?;
        Ok(cfg)
    }

    /// The subset the trainer consumes; discriminator input width follows
    /// from the skill-window size and embedding width so they can never drift
    /// apart.
    pub fn train_setup(&self) -> TrainSetup {
        let mut discriminator = self.discriminator.clone();
        discriminator.input_dim = self.skill.num_domain_frames * self.encoder.embedding_dim;
        TrainSetup {
            seed: self.seed,
            encoder: self.encoder.clone(),
            discriminator,
            losses: self.losses.clone(),
            trainer: self.trainer.clone(),
            batch: self.batch.clone(),
            skill: self.skill.clone(),
            augment: self.augment.clone(),
        }
    }

    /// Writes the fully-resolved config next to run outputs, so every
    /// artifact directory records exactly what produced it.
    pub fn freeze(&self, out_dir: &Path) -> Result<(), ConfigError> {
        std::fs::create_dir_all(out_dir)?;
        let text = toml::to_string_pretty(self).expect("config serializes");
        std::fs::write(out_dir.join("config.frozen.toml"), text)?;
        Ok(())
    }
}

/// Applies one `a.b.c=value` override onto the raw TOML tree. The value side
/// is parsed as TOML; bare words fall back to strings.
fn apply_override(root: &mut toml::Value, spec: &str) -> Result<(), ConfigError> {
    let (key_path, raw_value) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
    let key_path = key_path.trim();
    let raw_value = raw_value.trim();
    if key_path.is_empty() {
        return Err(ConfigError::BadOverride(spec.to_string()));
    }
    let parsed: toml::Value = match format!("v = {raw_value}").parse::<toml::Value>() {
        Ok(toml::Value::Table(mut t)) => t.remove("v").unwrap(),
        _ => toml::Value::String(raw_value.to_string()),
    };
    let mut node = root;
    let parts: Vec<&str> = key_path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| ConfigError::UnknownKey(key_path.to_string()))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    unreachable!()
}
