use crate::graph::CrystalGraph;
use crate::text::TokenSequence;

use super::ModelError;

/// Several crystals as one disjoint-union graph plus their token sequences
/// padded to the longest real length in the batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub size: usize,
    /// Row-major `total_nodes × atom_feature_dim`.
    pub node_features: Vec<f64>,
    pub atom_feature_dim: usize,
    pub node_counts: Vec<usize>,
    /// First global node index of each crystal.
    pub node_offsets: Vec<usize>,
    /// Global node index of each edge's center atom.
    pub edge_src: Vec<usize>,
    /// Global node index of each edge's neighbor.
    pub edge_dst: Vec<usize>,
    /// Row-major `edges × edge_feature_dim`.
    pub edge_features: Vec<f64>,
    pub edge_feature_dim: usize,
    /// Row-major `size × seq_len`.
    pub token_ids: Vec<usize>,
    pub token_mask: Vec<bool>,
    pub seq_len: usize,
}

impl Batch {
    pub fn new(samples: &[(&CrystalGraph, &TokenSequence)]) -> Result<Batch, ModelError> {
        let (first_graph, _) = samples.first().ok_or(ModelError::EmptyBatch)?;
        let atom_feature_dim = first_graph.atom_feature_dim;
        let edge_feature_dim = first_graph.edge_feature_dim;
        let seq_len = samples.iter().map(|(_, s)| s.real_len()).max().unwrap_or(1).max(1);

        let mut batch = Batch {
            size: samples.len(),
            node_features: Vec::new(),
            atom_feature_dim,
            node_counts: Vec::with_capacity(samples.len()),
            node_offsets: Vec::with_capacity(samples.len()),
            edge_src: Vec::new(),
            edge_dst: Vec::new(),
            edge_features: Vec::new(),
            edge_feature_dim,
            token_ids: Vec::with_capacity(samples.len() * seq_len),
            token_mask: Vec::with_capacity(samples.len() * seq_len),
            seq_len,
        };
        let mut offset = 0;
        for (index, (graph, seq)) in samples.iter().enumerate() {
            if graph.atom_feature_dim != atom_feature_dim || graph.edge_feature_dim != edge_feature_dim {
                return Err(ModelError::InputMismatch(format!(
                    "crystal {index} has different feature widths"
                )));
            }
            if graph.num_nodes == 0 {
                return Err(ModelError::EmptyGraph { index });
            }
            batch.node_offsets.push(offset);
            batch.node_counts.push(graph.num_nodes);
            batch.node_features.extend_from_slice(&graph.node_features);
            for e in &graph.edges {
                batch.edge_src.push(offset + e.src);
                batch.edge_dst.push(offset + e.dst);
            }
            batch.edge_features.extend_from_slice(&graph.edge_features);
            offset += graph.num_nodes;

            for k in 0..seq_len {
                let real = seq.mask.get(k).copied().unwrap_or(false);
                batch.token_mask.push(real);
                batch.token_ids.push(if real {
                    seq.ids[k] as usize
                } else {
                    crate::text::PAD as usize
                });
            }
        }
        Ok(batch)
    }

    pub fn total_nodes(&self) -> usize {
        self.node_counts.iter().sum()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_src.len()
    }

    pub fn max_nodes(&self) -> usize {
        self.node_counts.iter().copied().max().unwrap_or(0)
    }

    /// Crystal index of every global node.
    pub fn node_graph_index(&self) -> Vec<usize> {
        self.node_counts
            .iter()
            .enumerate()
            .flat_map(|(g, &n)| std::iter::repeat_n(g, n))
            .collect()
    }

    /// Real token count of each sequence.
    pub fn token_lengths(&self) -> Vec<usize> {
        self.token_mask
            .chunks(self.seq_len)
            .map(|row| row.iter().filter(|&&m| m).count())
            .collect()
    }
}
