//! File-level run configuration. Every field has a default; unknown keys are
//! rejected at parse time.

use serde::{Deserialize, Serialize};

use crate::graph::GraphConfig;
use crate::model::{FusionConfig, ModelConfig};
use crate::text::CorruptionMix;
use crate::training::{SweepConfig, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextConfig {
    pub max_len: usize,
    pub min_freq: usize,
    pub corruption: CorruptionMix,
}

impl Default for TextConfig {
    fn default() -> Self {
        TextConfig {
            max_len: 128,
            min_freq: 1,
            corruption: CorruptionMix::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Output subdirectory name under `output_dir`.
    pub name: String,
    pub seed: u64,
    pub precision: Precision,
    pub output_dir: String,
    pub graph: GraphConfig,
    pub text: TextConfig,
    pub model: ModelConfig,
    pub fusion: FusionConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: "default".into(),
            seed: 0,
            precision: Precision::F64,
            output_dir: "run".into(),
            graph: GraphConfig::default(),
            text: TextConfig::default(),
            model: ModelConfig::default(),
            fusion: FusionConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}
