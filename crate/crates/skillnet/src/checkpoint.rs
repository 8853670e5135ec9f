//! Self-describing checkpoint container: config echo, weights, optimizer
//! state, rng states and the training-step counter, serialized as JSON.

use crate::discriminator::Discriminator;
use crate::encoder::Encoder;
use crate::nn::AdamState;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("unsupported checkpoint format version {0}")]
    BadVersion(u32),
    #[error("checkpoint/config mismatch: {0}")]
    ConfigMismatch(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub step: u64,
    /// Frozen copy of the experiment configuration this run used.
    pub config: serde_json::Value,
    pub encoder: Encoder,
    /// Training-only; stripped for deployment checkpoints.
    pub discriminator: Option<Discriminator>,
    pub encoder_opt: Option<AdamState>,
    pub discriminator_opt: Option<AdamState>,
    /// Serialized rng states so a resumed run continues the exact stream.
    pub data_rng: Option<Vec<u8>>,
    pub noise_rng: Option<Vec<u8>>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut ckpt: Checkpoint = serde_json::from_reader(file)?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(CheckpointError::BadVersion(ckpt.format_version));
        }
        ckpt.encoder.ensure_grad_buffers();
        if let Some(d) = ckpt.discriminator.as_mut() {
            d.ensure_grad_buffers();
        }
        Ok(ckpt)
    }

    /// Removes training-only state, keeping just the encoder for deployment.
    pub fn strip_for_deployment(mut self) -> Self {
        self.discriminator = None;
        self.encoder_opt = None;
        self.discriminator_opt = None;
        self.data_rng = None;
        self.noise_rng = None;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_preserves_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = Encoder::new(
            EncoderConfig {
                input_size: 32,
                feature_channels: 4,
                ..Default::default()
            },
            &mut rng,
        );
        let params = enc.params_flat();
        let ckpt = Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            step: 42,
            config: serde_json::json!({"seed": 1}),
            encoder: enc,
            discriminator: None,
            encoder_opt: Some(AdamState::new(params.len(), 1e-3)),
            discriminator_opt: None,
            data_rng: None,
            noise_rng: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.step, 42);
        assert_eq!(loaded.encoder.params_flat(), params);
        assert!(loaded.encoder_opt.is_some());
    }

    #[test]
    fn bad_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        std::fs::write(&path, r#"{"format_version": 999}"#).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
