//! The fusion network: a crystal graph convolution encoder, a small
//! transformer text encoder, multi-head cross attention between the two
//! pooled embeddings and an affine prediction head.

mod batch;
pub mod fusion;
pub mod graph_encoder;
mod init;
pub mod text_encoder;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{ParamStore, Real, Tape, Tensor, TensorError, Var};

pub use batch::Batch;
pub use fusion::{FusionOutput, FusionParams};
pub use graph_encoder::{ConvLayerParams, GraphEncoderParams};
pub use text_encoder::{AttentionHeadParams, TextEncoderParams, TextLayerParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("crystal {index} in the batch has no atoms")]
    EmptyGraph { index: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("input does not match the model: {0}")]
    InputMismatch(String),
}

/// Layer counts and widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub graph_layers: usize,
    pub graph_hidden: usize,
    pub text_layers: usize,
    pub text_hidden: usize,
    pub text_heads: usize,
    pub text_ff: usize,
    pub fusion_dim: usize,
    pub fusion_heads: usize,
    /// Squash the prediction through a logistic sigmoid.
    pub sigmoid_output: bool,
    pub layer_norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            graph_layers: 3,
            graph_hidden: 64,
            text_layers: 2,
            text_hidden: 64,
            text_heads: 4,
            text_ff: 128,
            fusion_dim: 64,
            fusion_heads: 4,
            sigmoid_output: false,
            layer_norm_eps: 1e-5,
        }
    }
}

/// Source of the fusion keys and values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// The pooled graph embedding as a length-1 sequence.
    Vector,
    /// Per-atom features before pooling, so attention weights spread over atoms.
    Token,
}

/// Which projected embeddings reach the fusion block; the other is zeroed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Fused,
    GraphOnly,
    TextOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub mode: FusionMode,
    pub modality: Modality,
    pub multi_head: bool,
    pub layer_norm: bool,
    pub dropout: bool,
    pub residual: bool,
    pub dropout_rate: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            mode: FusionMode::Vector,
            modality: Modality::Fused,
            multi_head: true,
            layer_norm: true,
            dropout: true,
            residual: true,
            dropout_rate: 0.1,
        }
    }
}

impl FusionConfig {
    /// All 16 settings of the four boolean toggles.
    pub fn toggle_grid() -> Vec<FusionConfig> {
        (0..16u8)
            .map(|bits| FusionConfig {
                multi_head: bits & 1 != 0,
                layer_norm: bits & 2 != 0,
                dropout: bits & 4 != 0,
                residual: bits & 8 != 0,
                ..FusionConfig::default()
            })
            .collect()
    }
}

/// Data-dependent sizes fixed when the model is created.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    pub atom_features: usize,
    pub edge_features: usize,
    pub vocab_size: usize,
    pub max_len: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardMode {
    /// Dropout active, masks drawn from the seed.
    Train {
        dropout_seed: u64,
    },
    Eval,
}

/// Tape handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `[B, 1]`
    pub prediction: Var,
    /// `[B, fusion_dim]`, the representation fed to the prediction head.
    pub embedding: Var,
    /// One `[B, 1, keys]` weight tensor per fusion head.
    pub attention: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct FusionModel<T> {
    pub config: ModelConfig,
    pub fusion: FusionConfig,
    pub dims: InputDims,
    pub params: ParamStore<T>,
    pub graph: GraphEncoderParams,
    pub text: TextEncoderParams,
    pub head: FusionParams,
}

impl<T: Real> FusionModel<T> {
    /// Fresh parameters drawn from `seed`. Parameter names and insertion
    /// order depend only on the configs and dims.
    pub fn new(config: ModelConfig, fusion: FusionConfig, dims: InputDims, seed: u64) -> Result<Self, ModelError> {
        validate(&config, &fusion, &dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let graph = GraphEncoderParams::init(&mut params, &mut rng, &config, &dims);
        let text = TextEncoderParams::init(&mut params, &mut rng, &config, &dims);
        let head = FusionParams::init(&mut params, &mut rng, &config, &fusion);
        Ok(FusionModel {
            config,
            fusion,
            dims,
            params,
            graph,
            text,
            head,
        })
    }

    /// Same architecture with every parameter converted to `U`.
    pub fn cast<U: Real>(&self) -> FusionModel<U> {
        FusionModel {
            config: self.config.clone(),
            fusion: self.fusion.clone(),
            dims: self.dims,
            params: self.params.cast(),
            graph: self.graph.clone(),
            text: self.text.clone(),
            head: self.head.clone(),
        }
    }

    pub fn forward(&self, tape: &mut Tape<T>, batch: &Batch, mode: ForwardMode) -> Result<ForwardOutput, ModelError> {
        self.forward_with(&self.params, tape, batch, mode)
    }

    /// Forward pass reading parameter values from `params`, which must share
    /// this model's layout.
    pub fn forward_with(
        &self,
        params: &ParamStore<T>,
        tape: &mut Tape<T>,
        batch: &Batch,
        mode: ForwardMode,
    ) -> Result<ForwardOutput, ModelError> {
        self.check_batch(batch)?;
        let need_graph = self.fusion.modality != Modality::TextOnly;
        let need_text = self.fusion.modality != Modality::GraphOnly;
        let graph = if need_graph {
            let nodes = self.graph.encode_nodes(tape, params, batch)?;
            let pooled = graph_encoder::graph_pool(tape, nodes, batch)?;
            Some((nodes, pooled))
        } else {
            None
        };
        let text = if need_text {
            Some(self.text.encode(tape, params, batch, self.config.layer_norm_eps)?)
        } else {
            None
        };
        let dropout_seed = match mode {
            ForwardMode::Train { dropout_seed } if self.fusion.dropout => Some(dropout_seed),
            _ => None,
        };
        let out = self.head.fuse(
            tape,
            params,
            fusion::FusionInputs {
                batch,
                pooled_graph: graph.map(|g| g.1),
                node_states: graph.map(|g| g.0),
                pooled_text: text,
            },
            &self.config,
            &self.fusion,
            dropout_seed,
        )?;
        let prediction = self
            .head
            .predict(tape, params, out.combined, self.config.sigmoid_output)?;
        Ok(ForwardOutput {
            prediction,
            embedding: out.combined,
            attention: out.attention,
        })
    }

    /// Eval-mode predictions, one per batch entry.
    pub fn predict(&self, batch: &Batch) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, batch, ForwardMode::Eval)?;
        Ok(tape.value(out.prediction).to_f64_vec())
    }

    /// Eval-mode fused embeddings, one row per batch entry.
    pub fn embed(&self, batch: &Batch) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, batch, ForwardMode::Eval)?;
        let width = self.config.fusion_dim;
        Ok(tape
            .value(out.embedding)
            .to_f64_vec()
            .chunks(width)
            .map(<[f64]>::to_vec)
            .collect())
    }

    /// Mean squared error of the predictions against `targets`.
    pub fn loss(
        &self,
        tape: &mut Tape<T>,
        batch: &Batch,
        targets: &[f64],
        mode: ForwardMode,
    ) -> Result<Var, ModelError> {
        self.loss_with(&self.params, tape, batch, targets, mode)
    }

    pub fn loss_with(
        &self,
        params: &ParamStore<T>,
        tape: &mut Tape<T>,
        batch: &Batch,
        targets: &[f64],
        mode: ForwardMode,
    ) -> Result<Var, ModelError> {
        if targets.len() != batch.size {
            return Err(ModelError::InputMismatch(format!(
                "{} targets for a batch of {}",
                targets.len(),
                batch.size
            )));
        }
        let out = self.forward_with(params, tape, batch, mode)?;
        let y = tape.constant(Tensor::from_f64(&[batch.size, 1], targets)?);
        Ok(tape.mse(out.prediction, y)?)
    }

    fn check_batch(&self, batch: &Batch) -> Result<(), ModelError> {
        let mismatch = |what: &str, got: usize, want: usize| {
            Err(ModelError::InputMismatch(format!(
                "{what} is {got}, model expects {want}"
            )))
        };
        if batch.atom_feature_dim != self.dims.atom_features {
            return mismatch("atom feature width", batch.atom_feature_dim, self.dims.atom_features);
        }
        if batch.edge_feature_dim != self.dims.edge_features {
            return mismatch("edge feature width", batch.edge_feature_dim, self.dims.edge_features);
        }
        if batch.seq_len > self.dims.max_len {
            return mismatch("sequence length", batch.seq_len, self.dims.max_len);
        }
        if let Some(&id) = batch.token_ids.iter().find(|&&id| id >= self.dims.vocab_size) {
            return mismatch("token id", id, self.dims.vocab_size);
        }
        Ok(())
    }
}

fn validate(config: &ModelConfig, fusion: &FusionConfig, dims: &InputDims) -> Result<(), ModelError> {
    let bad = |m: String| Err(ModelError::InvalidConfig(m));
    for (name, v) in [
        ("graph_hidden", config.graph_hidden),
        ("text_hidden", config.text_hidden),
        ("text_heads", config.text_heads),
        ("text_ff", config.text_ff),
        ("fusion_dim", config.fusion_dim),
        ("fusion_heads", config.fusion_heads),
        ("atom feature width", dims.atom_features),
        ("vocabulary size", dims.vocab_size),
        ("max_len", dims.max_len),
    ] {
        if v == 0 {
            return bad(format!("{name} must be positive"));
        }
    }
    if config.text_hidden % config.text_heads != 0 {
        return bad(format!(
            "text_hidden {} is not divisible by text_heads {}",
            config.text_hidden, config.text_heads
        ));
    }
    if fusion.multi_head && config.fusion_dim % config.fusion_heads != 0 {
        return bad(format!(
            "fusion_dim {} is not divisible by fusion_heads {}",
            config.fusion_dim, config.fusion_heads
        ));
    }
    if !(0.0..1.0).contains(&fusion.dropout_rate) {
        return bad(format!("dropout_rate {} outside [0, 1)", fusion.dropout_rate));
    }
    if !(config.layer_norm_eps > 0.0) {
        return bad("layer_norm_eps must be positive".into());
    }
    Ok(())
}
