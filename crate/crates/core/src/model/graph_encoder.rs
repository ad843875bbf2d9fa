use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamId, ParamStore, Real, Tape, Tensor, Var};

use super::init::{bias, weight};
use super::{Batch, InputDims, ModelConfig, ModelError};

/// One gated convolution: a sigmoid gate and a softplus core, both affine in
/// `z = [h_center, h_neighbor, edge]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayerParams {
    pub gate_weight: ParamId,
    pub gate_bias: ParamId,
    pub core_weight: ParamId,
    pub core_bias: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphEncoderParams {
    /// `[atom_features, graph_hidden]`
    pub input_weight: ParamId,
    pub input_bias: ParamId,
    pub layers: Vec<ConvLayerParams>,
}

impl GraphEncoderParams {
    pub(crate) fn init<T: Real>(
        params: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        config: &ModelConfig,
        dims: &InputDims,
    ) -> Self {
        let hidden = config.graph_hidden;
        let input_weight = weight(params, rng, "graph.input.weight".into(), dims.atom_features, hidden);
        let input_bias = bias(params, rng, "graph.input.bias".into(), dims.atom_features, hidden);
        let z_width = 2 * hidden + dims.edge_features;
        let layers = (0..config.graph_layers)
            .map(|l| ConvLayerParams {
                gate_weight: weight(params, rng, format!("graph.conv{l}.gate.weight"), z_width, hidden),
                gate_bias: bias(params, rng, format!("graph.conv{l}.gate.bias"), z_width, hidden),
                core_weight: weight(params, rng, format!("graph.conv{l}.core.weight"), z_width, hidden),
                core_bias: bias(params, rng, format!("graph.conv{l}.core.bias"), z_width, hidden),
            })
            .collect();
        GraphEncoderParams {
            input_weight,
            input_bias,
            layers,
        }
    }

    /// Node states after the input projection and every convolution,
    /// `[total_nodes, graph_hidden]`.
    pub fn encode_nodes<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        batch: &Batch,
    ) -> Result<Var, ModelError> {
        let x = tape.constant(Tensor::from_f64(
            &[batch.total_nodes(), batch.atom_feature_dim],
            &batch.node_features,
        )?);
        let w = tape.param(params, self.input_weight);
        let b = tape.param(params, self.input_bias);
        let projected = tape.matmul(x, w)?;
        let mut h = tape.add(projected, b)?;
        let edges = tape.constant(Tensor::from_f64(
            &[batch.num_edges(), batch.edge_feature_dim],
            &batch.edge_features,
        )?);
        for layer in &self.layers {
            h = cgcnn_conv(tape, params, layer, h, edges, batch)?;
        }
        Ok(h)
    }
}

/// `h_i + Σ_j sigmoid(z_ij W_gate + b_gate) ⊙ softplus(z_ij W_core + b_core)`
/// summed over the edges whose center atom is `i`.
pub fn cgcnn_conv<T: Real>(
    tape: &mut Tape<T>,
    params: &ParamStore<T>,
    layer: &ConvLayerParams,
    h: Var,
    edge_features: Var,
    batch: &Batch,
) -> Result<Var, ModelError> {
    if batch.num_edges() == 0 {
        return Ok(h);
    }
    let centers = tape.embedding_lookup(h, &batch.edge_src)?;
    let neighbors = tape.embedding_lookup(h, &batch.edge_dst)?;
    let z = tape.concat(&[centers, neighbors, edge_features])?;
    let (wg, bg) = (
        tape.param(params, layer.gate_weight),
        tape.param(params, layer.gate_bias),
    );
    let (wc, bc) = (
        tape.param(params, layer.core_weight),
        tape.param(params, layer.core_bias),
    );
    let gate = tape.matmul(z, wg)?;
    let gate = tape.add(gate, bg)?;
    let gate = tape.sigmoid(gate);
    let core = tape.matmul(z, wc)?;
    let core = tape.add(core, bc)?;
    let core = tape.softplus(core);
    let messages = tape.mul(gate, core)?;
    let aggregated = tape.segment_sum(messages, &batch.edge_src, batch.total_nodes())?;
    Ok(tape.add(h, aggregated)?)
}

/// Mean of each crystal's node rows, `[batch, width]`.
pub fn graph_pool<T: Real>(tape: &mut Tape<T>, h: Var, batch: &Batch) -> Result<Var, ModelError> {
    let total = batch.total_nodes();
    let mut pool = vec![0.0; batch.size * total];
    for (g, (&offset, &count)) in batch.node_offsets.iter().zip(&batch.node_counts).enumerate() {
        if count == 0 {
            return Err(ModelError::EmptyGraph { index: g });
        }
        let share = 1.0 / count as f64;
        for n in offset..offset + count {
            pool[g * total + n] = share;
        }
    }
    let pool = tape.constant(Tensor::from_f64(&[batch.size, total], &pool)?);
    Ok(tape.matmul(pool, h)?)
}
