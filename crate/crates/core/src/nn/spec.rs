use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the residual classifier.
///
/// Stage `s` runs `blocks_per_stage[s]` basic blocks at
/// `stem_channels * 2^s` channels; every stage after the first halves the
/// spatial side in its first block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub input_side: usize,
    pub stem_channels: usize,
    #[serde(default = "default_stem_stride")]
    pub stem_stride: usize,
    pub blocks_per_stage: Vec<usize>,
}

fn default_stem_stride() -> usize {
    2
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            input_side: 64,
            stem_channels: 8,
            stem_stride: 2,
            blocks_per_stage: vec![1, 1, 1],
        }
    }
}

impl ModelSpec {
    pub const NUM_CLASSES: usize = 2;

    pub fn validate(&self) -> Result<()> {
        if self.input_side == 0 || self.stem_channels == 0 || self.stem_stride == 0 {
            return Err(Error::Config("model sizes must be positive".into()));
        }
        if self.blocks_per_stage.is_empty() || self.blocks_per_stage.contains(&0) {
            return Err(Error::Config(
                "model needs at least one stage, each with at least one block".into(),
            ));
        }
        Ok(())
    }

    /// Number of residual blocks.
    pub fn depth(&self) -> usize {
        self.blocks_per_stage.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "defaults::lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "defaults::beta1")]
    pub beta1: f64,
    #[serde(default = "defaults::beta2")]
    pub beta2: f64,
    #[serde(default = "defaults::eps")]
    pub epsilon: f64,
    #[serde(default = "defaults::batch")]
    pub batch_size: usize,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::augment")]
    pub augment: bool,
}

mod defaults {
    pub fn lr() -> f64 {
        1e-4
    }
    pub fn beta1() -> f64 {
        0.9
    }
    pub fn beta2() -> f64 {
        0.999
    }
    pub fn eps() -> f64 {
        1e-8
    }
    pub fn batch() -> usize {
        32
    }
    pub fn epochs() -> usize {
        30
    }
    pub fn augment() -> bool {
        true
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: defaults::lr(),
            weight_decay: 0.0,
            beta1: defaults::beta1(),
            beta2: defaults::beta2(),
            epsilon: defaults::eps(),
            batch_size: defaults::batch(),
            epochs: defaults::epochs(),
            augment: defaults::augment(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.weight_decay < 0.0 || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("invalid optimizer coefficients".into()));
        }
        Ok(())
    }
}
