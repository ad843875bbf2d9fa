use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamId, ParamStore, Real, Tape, Tensor, Var};

use super::init::{bias, layer_norm, weight};
use super::text_encoder::{attention_head, attention_mask_bias, AttentionHeadParams};
use super::{Batch, FusionConfig, FusionMode, ModelConfig, ModelError};

#[derive(Clone, Debug, PartialEq)]
pub struct FusionParams {
    /// `[graph_hidden, fusion_dim]`
    pub graph_projection: ParamId,
    /// `[text_hidden, fusion_dim]`
    pub text_projection: ParamId,
    /// Queries read the text side, keys and values the graph side.
    pub heads: Vec<AttentionHeadParams>,
    /// `[fusion_dim, fusion_dim]`, applied to the concatenated heads.
    pub output: ParamId,
    pub norm_gain: ParamId,
    pub norm_bias: ParamId,
    /// `[fusion_dim, 1]`
    pub head_weight: ParamId,
    pub head_bias: ParamId,
}

/// Encoder outputs entering the fusion block. A missing side is replaced by
/// zeros after projection.
#[derive(Clone, Copy, Debug)]
pub struct FusionInputs<'a> {
    pub batch: &'a Batch,
    /// `[batch, graph_hidden]`
    pub pooled_graph: Option<Var>,
    /// `[total_nodes, graph_hidden]`, used in token mode.
    pub node_states: Option<Var>,
    /// `[batch, text_hidden]`
    pub pooled_text: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct FusionOutput {
    /// `[batch, fusion_dim]`
    pub combined: Var,
    /// One `[batch, 1, keys]` tensor per head.
    pub attention: Vec<Var>,
}

impl FusionParams {
    pub(crate) fn init<T: Real>(
        params: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        config: &ModelConfig,
        fusion: &FusionConfig,
    ) -> Self {
        let d = config.fusion_dim;
        let graph_projection = weight(params, rng, "fusion.graph_projection".into(), config.graph_hidden, d);
        let text_projection = weight(params, rng, "fusion.text_projection".into(), config.text_hidden, d);
        let head_count = if fusion.multi_head { config.fusion_heads } else { 1 };
        let heads = (0..head_count)
            .map(|h| AttentionHeadParams::init(params, rng, &format!("fusion.head{h}"), d, d, d / head_count))
            .collect();
        let output = weight(params, rng, "fusion.output".into(), d, d);
        let (norm_gain, norm_bias) = layer_norm(params, "fusion.norm", d);
        let head_weight = weight(params, rng, "predictor.weight".into(), d, 1);
        let head_bias = bias(params, rng, "predictor.bias".into(), d, 1);
        FusionParams {
            graph_projection,
            text_projection,
            heads,
            output,
            norm_gain,
            norm_bias,
            head_weight,
            head_bias,
        }
    }

    /// Cross attention from the projected text embedding onto the graph side,
    /// followed by the optional residual, layer norm and dropout.
    pub fn fuse<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        inputs: FusionInputs<'_>,
        config: &ModelConfig,
        fusion: &FusionConfig,
        dropout_seed: Option<u64>,
    ) -> Result<FusionOutput, ModelError> {
        let batch = inputs.batch;
        let (b, d) = (batch.size, config.fusion_dim);

        let text = match inputs.pooled_text {
            Some(t) => {
                let w = tape.param(params, self.text_projection);
                tape.matmul(t, w)?
            }
            None => tape.constant(Tensor::zeros(&[b, d])),
        };
        let query_source = tape.reshape(text, &[b, 1, d])?;

        let (key_source, key_bias) = match fusion.mode {
            FusionMode::Vector => {
                let graph = match inputs.pooled_graph {
                    Some(g) => {
                        let w = tape.param(params, self.graph_projection);
                        tape.matmul(g, w)?
                    }
                    None => tape.constant(Tensor::zeros(&[b, d])),
                };
                (tape.reshape(graph, &[b, 1, d])?, None)
            }
            FusionMode::Token => {
                let max_nodes = batch.max_nodes();
                let nodes = match inputs.node_states {
                    Some(h) => {
                        let w = tape.param(params, self.graph_projection);
                        let projected = tape.matmul(h, w)?;
                        let slots = padded_slots(batch, max_nodes);
                        let padded = tape.segment_sum(projected, &slots, b * max_nodes)?;
                        tape.reshape(padded, &[b, max_nodes, d])?
                    }
                    None => tape.constant(Tensor::zeros(&[b, max_nodes, d])),
                };
                let mut mask = vec![false; b * max_nodes];
                for (g, &count) in batch.node_counts.iter().enumerate() {
                    mask[g * max_nodes..g * max_nodes + count].fill(true);
                }
                let bias = tape.constant(attention_mask_bias(&mask, b, 1, max_nodes)?);
                (nodes, Some(bias))
            }
        };

        let mut head_outputs = Vec::with_capacity(self.heads.len());
        let mut attention = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let (wq, wk, wv) = (
                tape.param(params, head.query),
                tape.param(params, head.key),
                tape.param(params, head.value),
            );
            let q = tape.matmul(query_source, wq)?;
            let k = tape.matmul(key_source, wk)?;
            let v = tape.matmul(key_source, wv)?;
            let (out, weights) = attention_head(tape, q, k, v, key_bias)?;
            head_outputs.push(out);
            attention.push(weights);
        }
        let heads = tape.concat(&head_outputs)?;
        let heads = tape.reshape(heads, &[b, d])?;
        let wo = tape.param(params, self.output);
        let mut combined = tape.matmul(heads, wo)?;
        if fusion.residual {
            combined = tape.add(combined, text)?;
        }
        if fusion.layer_norm {
            let (g, beta) = (tape.param(params, self.norm_gain), tape.param(params, self.norm_bias));
            combined = tape.layer_norm(combined, g, beta, config.layer_norm_eps)?;
        }
        if let Some(seed) = dropout_seed {
            if fusion.dropout_rate > 0.0 {
                let mask = tape.constant(dropout_mask(&[b, d], fusion.dropout_rate, seed));
                combined = tape.mul(combined, mask)?;
            }
        }
        Ok(FusionOutput { combined, attention })
    }

    /// `combined · W + b`, optionally through a sigmoid; `[batch, 1]`.
    pub fn predict<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        combined: Var,
        sigmoid_output: bool,
    ) -> Result<Var, ModelError> {
        let (w, b) = (tape.param(params, self.head_weight), tape.param(params, self.head_bias));
        let y = tape.matmul(combined, w)?;
        let y = tape.add(y, b)?;
        Ok(if sigmoid_output { tape.sigmoid(y) } else { y })
    }
}

/// Slot `g * max_nodes + local` of every global node.
fn padded_slots(batch: &Batch, max_nodes: usize) -> Vec<usize> {
    let mut slots = Vec::with_capacity(batch.total_nodes());
    for (g, &count) in batch.node_counts.iter().enumerate() {
        slots.extend((0..count).map(|local| g * max_nodes + local));
    }
    slots
}

/// Inverted dropout: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn dropout_mask<T: Real>(shape: &[usize], rate: f64, seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = T::lit(1.0 / (1.0 - rate));
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| if rng.random_bool(rate) { T::zero() } else { keep })
        .collect();
    Tensor::new(shape, data).expect("rank <= 3")
}
