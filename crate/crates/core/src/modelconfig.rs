//! Detector training hyperparameters as a JSON document.
//!
//! Nothing here trains a model; the config is emitted for an external
//! trainer. `detection_min_confidence` is a fraction (0.35 means 35%).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("num_classes must be 3 (background, exudate, microaneurysm), got {0}")]
    NumClasses(u32),
    #[error("detection_min_confidence must lie strictly between 0 and 1, got {0}")]
    MinConfidence(f64),
    #[error("lr_schedule is empty")]
    EmptySchedule,
    #[error("lr_schedule step {index} has non-positive learning rate {lr}")]
    NonPositiveLr { index: usize, lr: f64 },
    #[error("lr_schedule step {index} has zero epochs")]
    ZeroEpochs { index: usize },
    #[error("lr_schedule epochs sum to {scheduled} but total_epochs is {declared}")]
    EpochSum { declared: u32, scheduled: u32 },
    #[error("{field} must be positive")]
    NonPositive { field: &'static str },
    #[error("optimizer name is empty")]
    EmptyOptimizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrStep {
    pub lr: f64,
    pub epochs: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelTrainConfig {
    /// Smallest RPN anchor side in pixels; larger scales are left to the trainer.
    pub rpn_anchor_min: u32,
    pub rpn_train_anchors_per_image: u32,
    pub train_rois_per_image: u32,
    pub detection_max_instances: u32,
    pub detection_min_confidence: f64,
    /// Including background.
    pub num_classes: u32,
    pub use_mini_mask: bool,
    pub optimizer: String,
    pub lr_schedule: Vec<LrStep>,
    pub total_epochs: u32,
    pub input_side: u32,
}

pub fn default_train_config() -> ModelTrainConfig {
    ModelTrainConfig {
        rpn_anchor_min: 8,
        rpn_train_anchors_per_image: 512,
        train_rois_per_image: 512,
        detection_max_instances: 256,
        detection_min_confidence: 0.35,
        num_classes: 3,
        use_mini_mask: false,
        optimizer: "adam".to_owned(),
        lr_schedule: vec![
            LrStep { lr: 1e-4, epochs: 25 },
            LrStep { lr: 1e-5, epochs: 25 },
            LrStep { lr: 1e-6, epochs: 15 },
        ],
        total_epochs: 65,
        input_side: 1024,
    }
}

impl ModelTrainConfig {
    pub fn scheduled_epochs(&self) -> u32 {
        self.lr_schedule.iter().map(|s| s.epochs).sum()
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        if self.num_classes != 3 {
            return Err(ConfigError::NumClasses(self.num_classes));
        }
        let c = self.detection_min_confidence;
        if !(c > 0.0 && c < 1.0) {
            return Err(ConfigError::MinConfidence(c));
        }
        for (field, v) in [
            ("rpn_anchor_min", self.rpn_anchor_min),
            ("rpn_train_anchors_per_image", self.rpn_train_anchors_per_image),
            ("train_rois_per_image", self.train_rois_per_image),
            ("detection_max_instances", self.detection_max_instances),
            ("input_side", self.input_side),
        ] {
            if v == 0 {
                return Err(ConfigError::NonPositive { field });
            }
        }
        if self.optimizer.trim().is_empty() {
            return Err(ConfigError::EmptyOptimizer);
        }
        if self.lr_schedule.is_empty() {
            return Err(ConfigError::EmptySchedule);
        }
        for (index, step) in self.lr_schedule.iter().enumerate() {
            if !(step.lr > 0.0 && step.lr.is_finite()) {
                return Err(ConfigError::NonPositiveLr { index, lr: step.lr });
            }
            if step.epochs == 0 {
                return Err(ConfigError::ZeroEpochs { index });
            }
        }
        let scheduled = self.scheduled_epochs();
        if scheduled != self.total_epochs {
            return Err(ConfigError::EpochSum { declared: self.total_epochs, scheduled });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ModelTrainConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn write_config(cfg: &ModelTrainConfig, path: impl AsRef<Path>) -> Result<()> {
    cfg.validate()?;
    fs::write(path, cfg.to_json()?)?;
    Ok(())
}

pub fn read_config(path: impl AsRef<Path>) -> Result<ModelTrainConfig> {
    ModelTrainConfig::from_json(&fs::read_to_string(path)?)
}
