use nnkit::OptimizerConfig;
use serde::{Deserialize, Serialize};

use crate::VaeError;

/// Architecture of both encoders and the decoder. Nothing here depends on
/// the grid size, so one set of weights serves every resolution divisible
/// by four.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeConfig {
    /// Width at full resolution; the two downsampled levels use twice this.
    pub base_channels: usize,
    pub groups: usize,
    /// Residual blocks per resolution level.
    pub blocks_per_level: usize,
    /// Channels of each latent head.
    pub latent_channels: usize,
    pub codebook_size: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            base_channels: 16,
            groups: 4,
            blocks_per_level: 1,
            latent_channels: 4,
            codebook_size: 512,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<(), VaeError> {
        let bad = |m: &str| Err(VaeError::InvalidConfig(m.to_string()));
        if self.base_channels == 0 || self.latent_channels == 0 {
            return bad("channel counts must be positive");
        }
        if self.groups == 0 || self.base_channels % self.groups != 0 {
            return bad("base_channels must be divisible by groups");
        }
        if self.codebook_size < 2 {
            return bad("codebook_size must be at least 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub kl_weight: f64,
    pub commitment: f64,
    /// Codes unused for this many consecutive epochs are re-seeded.
    pub dead_code_epochs: usize,
    pub seed: u64,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 8,
            optimizer: OptimizerConfig {
                lr: 1e-3,
                ..Default::default()
            },
            kl_weight: 1e-4,
            commitment: 0.25,
            dead_code_epochs: 2,
            seed: 0,
        }
    }
}

impl VaeTrainConfig {
    pub fn validate(&self) -> Result<(), VaeError> {
        if self.batch_size == 0 {
            return Err(VaeError::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.kl_weight >= 0.0 && self.commitment >= 0.0) {
            return Err(VaeError::InvalidConfig("loss weights must be non-negative".into()));
        }
        self.optimizer.validate()?;
        Ok(())
    }
}
