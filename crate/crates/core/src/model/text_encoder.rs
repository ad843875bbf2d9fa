use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamId, ParamStore, Real, Tape, Tensor, Var};

use super::init::{bias, embedding, layer_norm, weight};
use super::{Batch, InputDims, ModelConfig, ModelError};

/// Additive score for masked key positions.
pub const MASK_BIAS: f64 = -1e9;

/// Query, key and value projections of one attention head.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionHeadParams {
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
}

impl AttentionHeadParams {
    pub(crate) fn init<T: Real>(
        params: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        query_in: usize,
        key_in: usize,
        head_dim: usize,
    ) -> Self {
        AttentionHeadParams {
            query: weight(params, rng, format!("{prefix}.query"), query_in, head_dim),
            key: weight(params, rng, format!("{prefix}.key"), key_in, head_dim),
            value: weight(params, rng, format!("{prefix}.value"), key_in, head_dim),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextLayerParams {
    pub heads: Vec<AttentionHeadParams>,
    /// `[text_hidden, text_hidden]`, applied to the concatenated heads.
    pub output: ParamId,
    pub norm1_gain: ParamId,
    pub norm1_bias: ParamId,
    pub ff1_weight: ParamId,
    pub ff1_bias: ParamId,
    pub ff2_weight: ParamId,
    pub ff2_bias: ParamId,
    pub norm2_gain: ParamId,
    pub norm2_bias: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextEncoderParams {
    pub token_embedding: ParamId,
    pub position_embedding: ParamId,
    pub layers: Vec<TextLayerParams>,
}

impl TextEncoderParams {
    pub(crate) fn init<T: Real>(
        params: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        config: &ModelConfig,
        dims: &InputDims,
    ) -> Self {
        let d = config.text_hidden;
        let head_dim = d / config.text_heads;
        let token_embedding = embedding(params, rng, "text.token_embedding".into(), dims.vocab_size, d);
        let position_embedding = embedding(params, rng, "text.position_embedding".into(), dims.max_len, d);
        let layers = (0..config.text_layers)
            .map(|l| {
                let p = format!("text.layer{l}");
                let heads = (0..config.text_heads)
                    .map(|h| AttentionHeadParams::init(params, rng, &format!("{p}.head{h}"), d, d, head_dim))
                    .collect();
                let output = weight(params, rng, format!("{p}.attn_output"), d, d);
                let (norm1_gain, norm1_bias) = layer_norm(params, &format!("{p}.norm1"), d);
                let ff1_weight = weight(params, rng, format!("{p}.ff1.weight"), d, config.text_ff);
                let ff1_bias = bias(params, rng, format!("{p}.ff1.bias"), d, config.text_ff);
                let ff2_weight = weight(params, rng, format!("{p}.ff2.weight"), config.text_ff, d);
                let ff2_bias = bias(params, rng, format!("{p}.ff2.bias"), config.text_ff, d);
                let (norm2_gain, norm2_bias) = layer_norm(params, &format!("{p}.norm2"), d);
                TextLayerParams {
                    heads,
                    output,
                    norm1_gain,
                    norm1_bias,
                    ff1_weight,
                    ff1_bias,
                    ff2_weight,
                    ff2_bias,
                    norm2_gain,
                    norm2_bias,
                }
            })
            .collect();
        TextEncoderParams {
            token_embedding,
            position_embedding,
            layers,
        }
    }

    /// Masked mean of the final token states, `[batch, text_hidden]`.
    pub fn encode<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        batch: &Batch,
        eps: f64,
    ) -> Result<Var, ModelError> {
        let (b, n) = (batch.size, batch.seq_len);
        let table = tape.param(params, self.token_embedding);
        let tokens = tape.embedding_lookup(table, &batch.token_ids)?;
        let width = tape.shape(tokens)[1];
        let tokens = tape.reshape(tokens, &[b, n, width])?;
        let positions = tape.param(params, self.position_embedding);
        let positions = tape.embedding_lookup(positions, &(0..n).collect::<Vec<_>>())?;
        let mut x = tape.add(tokens, positions)?;

        let key_bias = tape.constant(attention_mask_bias(&batch.token_mask, b, n, n)?);
        for layer in &self.layers {
            x = self_attention(tape, params, layer, x, key_bias, eps)?;
        }
        masked_mean(tape, x, &batch.token_mask, b, n)
    }
}

/// `[b, queries, keys]` additive bias: 0 at real keys, [`MASK_BIAS`] at padding.
pub fn attention_mask_bias<T: Real>(
    key_mask: &[bool],
    batch: usize,
    queries: usize,
    keys: usize,
) -> Result<Tensor<T>, ModelError> {
    let mut data = Vec::with_capacity(batch * queries * keys);
    for row in key_mask.chunks(keys).take(batch) {
        for _ in 0..queries {
            data.extend(row.iter().map(|&real| if real { 0.0 } else { MASK_BIAS }));
        }
    }
    Ok(Tensor::from_f64(&[batch, queries, keys], &data)?)
}

/// Scaled dot-product attention of one head: `softmax(Q Kᵀ / sqrt(d) + bias) V`.
/// Returns the output `[b, queries, d_v]` and the weights `[b, queries, keys]`.
pub fn attention_head<T: Real>(
    tape: &mut Tape<T>,
    queries: Var,
    keys: Var,
    values: Var,
    bias: Option<Var>,
) -> Result<(Var, Var), ModelError> {
    let head_dim = *tape.shape(queries).last().expect("rank 3");
    let keys_t = tape.transpose(keys)?;
    let scores = tape.matmul(queries, keys_t)?;
    let mut scores = tape.scale(scores, T::lit(1.0 / (head_dim as f64).sqrt()));
    if let Some(bias) = bias {
        scores = tape.add(scores, bias)?;
    }
    let weights = tape.softmax(scores);
    Ok((tape.matmul(weights, values)?, weights))
}

/// One post-norm transformer block over `x: [b, n, d]`: multi-head self
/// attention, residual and layer norm, then a ReLU feed-forward, residual
/// and layer norm.
pub fn self_attention<T: Real>(
    tape: &mut Tape<T>,
    params: &ParamStore<T>,
    layer: &TextLayerParams,
    x: Var,
    key_bias: Var,
    eps: f64,
) -> Result<Var, ModelError> {
    let mut head_outputs = Vec::with_capacity(layer.heads.len());
    for head in &layer.heads {
        let (wq, wk, wv) = (
            tape.param(params, head.query),
            tape.param(params, head.key),
            tape.param(params, head.value),
        );
        let q = tape.matmul(x, wq)?;
        let k = tape.matmul(x, wk)?;
        let v = tape.matmul(x, wv)?;
        head_outputs.push(attention_head(tape, q, k, v, Some(key_bias))?.0);
    }
    let heads = tape.concat(&head_outputs)?;
    let wo = tape.param(params, layer.output);
    let attended = tape.matmul(heads, wo)?;
    let x = tape.add(x, attended)?;
    let (g1, b1) = (
        tape.param(params, layer.norm1_gain),
        tape.param(params, layer.norm1_bias),
    );
    let x = tape.layer_norm(x, g1, b1, eps)?;

    let (w1, bias1) = (tape.param(params, layer.ff1_weight), tape.param(params, layer.ff1_bias));
    let (w2, bias2) = (tape.param(params, layer.ff2_weight), tape.param(params, layer.ff2_bias));
    let hidden = tape.matmul(x, w1)?;
    let hidden = tape.add(hidden, bias1)?;
    let hidden = tape.relu(hidden);
    let ff = tape.matmul(hidden, w2)?;
    let ff = tape.add(ff, bias2)?;
    let x = tape.add(x, ff)?;
    let (g2, b2) = (
        tape.param(params, layer.norm2_gain),
        tape.param(params, layer.norm2_bias),
    );
    Ok(tape.layer_norm(x, g2, b2, eps)?)
}

/// Mean over real positions of `x: [b, n, d]`, giving `[b, d]`.
pub fn masked_mean<T: Real>(tape: &mut Tape<T>, x: Var, mask: &[bool], b: usize, n: usize) -> Result<Var, ModelError> {
    let mut weights = Vec::with_capacity(b * n);
    for row in mask.chunks(n).take(b) {
        let real = row.iter().filter(|&&m| m).count().max(1) as f64;
        weights.extend(row.iter().map(|&m| if m { 1.0 / real } else { 0.0 }));
    }
    let weights = tape.constant(Tensor::from_f64(&[b, 1, n], &weights)?);
    let pooled = tape.matmul(weights, x)?;
    let d = *tape.shape(x).last().expect("rank 3");
    Ok(tape.reshape(pooled, &[b, d])?)
}
