//! Datasets, optimization, evaluation, checkpoints and the ablation sweeps.

mod checkpoint;
mod dataset;
mod manifest;
mod metrics;
mod optim;
mod schedule;
mod split;
mod sweeps;
mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::TensorError;
use crate::cif::CifError;
use crate::graph::GraphError;
use crate::model::ModelError;
use crate::text::TextError;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use dataset::{load_samples, tokenize_samples, Sample};
pub use manifest::{read_manifest, resolve_data_path, write_manifest, ManifestRecord, DATA_DIR_ENV};
pub use metrics::{mae, mse, r_squared, Normalizer};
pub use optim::AdamW;
pub use schedule::{cosine_warmup_lr, warmup_steps};
pub use split::{split_dataset, split_records, Split, SplitIndices};
pub use sweeps::{corruption_sweep, robustness_sweep, subsample_indices, CorruptionMode, CorruptionRow, RobustnessRow};
pub use trainer::{
    embeddings, evaluate, train, zero_shot_eval, DomainShift, EpochRecord, Evaluation, Prediction, TrainOutcome,
    ZeroShotReport,
};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("dataset too small: {0}")]
    TooSmall(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss {
        step: usize,
        /// Serialized checkpoint of the last parameters with a finite loss.
        last_good: Vec<u8>,
    },
    #[error("target of {0} is not finite")]
    NonFiniteTarget(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("record {id}: {source}")]
    Cif {
        id: String,
        #[source]
        source: CifError,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl TrainingError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        TrainingError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Peak learning rate reached at the end of warmup.
    pub learning_rate: f64,
    /// Warmup length as a fraction of the total step count.
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 16,
            learning_rate: 1e-3,
            warmup_fraction: 0.05,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            split: [0.8, 0.1, 0.1],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let bad = |m: String| Err(TrainingError::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate {} must be finite and non-negative",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad(format!("warmup_fraction {} outside [0, 1)", self.warmup_fraction));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)".into());
        }
        if !(self.eps > 0.0) || self.weight_decay < 0.0 {
            return bad("eps must be positive and weight_decay non-negative".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub train_fractions: Vec<f64>,
    pub corruption_levels: Vec<f64>,
    pub corruption_mode: CorruptionMode,
    /// Training seeds; every row is repeated once per seed.
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            train_fractions: vec![0.25, 0.5, 0.75, 1.0],
            corruption_levels: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            corruption_mode: CorruptionMode::Both,
            seeds: vec![0, 1, 2],
        }
    }
}
