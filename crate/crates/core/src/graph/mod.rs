//! Crystal graph construction: periodic neighbor search, one-hot atom
//! features and Gaussian-expanded edge distances.

mod features;
mod gaussian;
mod neighbors;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cif::{expand_symmetry, CrystalStructure};
use crate::lattice::{Lattice, LatticeError};

pub use features::{atom_features, AtomFeatureSpec, Attribute, Encoding, CONTINUOUS_BINS};
pub use gaussian::{gaussian_expand, GaussianBasis};
pub use neighbors::{neighbor_search_in, Edge, NeighborList, DISTANCE_TIE_TOL, SELF_IMAGE_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("no element data for Z = {0}")]
    UnknownElement(u8),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("invalid graph config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// Neighbor cutoff radius, Å.
    pub cutoff: f64,
    pub max_neighbors: usize,
    /// First Gaussian center, Å.
    pub gauss_min: f64,
    /// Last Gaussian center, Å; defaults to the cutoff.
    pub gauss_max: f64,
    pub gauss_step: f64,
    pub gauss_sigma: f64,
    /// Apply the CIF's symmetry operations before building the graph. When
    /// false the listed sites are taken as the full P1 basis.
    pub expand_symmetry: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            cutoff: 8.0,
            max_neighbors: 12,
            gauss_min: 0.0,
            gauss_max: 8.0,
            gauss_step: 0.2,
            gauss_sigma: 0.2,
            expand_symmetry: true,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |m: &str| Err(GraphError::InvalidConfig(m.to_string()));
        if !(self.cutoff > 0.0) {
            return bad("cutoff must be positive");
        }
        if self.max_neighbors == 0 {
            return bad("max_neighbors must be at least 1");
        }
        if !(self.gauss_max > self.gauss_min) {
            return bad("gauss_max must exceed gauss_min");
        }
        if !(self.gauss_step > 0.0 && self.gauss_sigma > 0.0) {
            return bad("gauss_step and gauss_sigma must be positive");
        }
        Ok(())
    }

    pub fn basis(&self) -> GaussianBasis {
        GaussianBasis::new(self.gauss_min, self.gauss_max, self.gauss_step, self.gauss_sigma)
    }

    pub fn edge_feature_dim(&self) -> usize {
        self.basis().len()
    }
}

/// Graph input for one crystal. Node order follows site order.
#[derive(Clone, Debug, PartialEq)]
pub struct CrystalGraph {
    pub num_nodes: usize,
    pub atomic_numbers: Vec<u8>,
    /// Row-major `num_nodes × atom_feature_dim`.
    pub node_features: Vec<f64>,
    pub atom_feature_dim: usize,
    pub edges: Vec<Edge>,
    /// Row-major `edges.len() × edge_feature_dim`, entries in (0, 1].
    pub edge_features: Vec<f64>,
    pub edge_feature_dim: usize,
}

impl CrystalGraph {
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_row(&self, i: usize) -> &[f64] {
        &self.node_features[i * self.atom_feature_dim..(i + 1) * self.atom_feature_dim]
    }

    pub fn edge_row(&self, e: usize) -> &[f64] {
        &self.edge_features[e * self.edge_feature_dim..(e + 1) * self.edge_feature_dim]
    }

    /// Relabel nodes so that new node `k` is old node `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> CrystalGraph {
        assert_eq!(perm.len(), self.num_nodes);
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut node_features = Vec::with_capacity(self.node_features.len());
        for &old in perm {
            node_features.extend_from_slice(self.node_row(old));
        }
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                src: inverse[e.src],
                dst: inverse[e.dst],
                image: e.image,
                distance: e.distance,
            })
            .collect();
        CrystalGraph {
            num_nodes: self.num_nodes,
            atomic_numbers: perm.iter().map(|&o| self.atomic_numbers[o]).collect(),
            node_features,
            atom_feature_dim: self.atom_feature_dim,
            edges,
            edge_features: self.edge_features.clone(),
            edge_feature_dim: self.edge_feature_dim,
        }
    }
}

/// Neighbor search over an expanded structure using its own lattice.
pub fn neighbor_search(s: &CrystalStructure, cutoff: f64, max_neighbors: usize) -> Result<NeighborList, GraphError> {
    let lattice = s.lattice()?;
    Ok(neighbor_search_in(&lattice, &s.frac_coords(), cutoff, max_neighbors))
}

pub fn build_graph(s: &CrystalStructure, cfg: &GraphConfig) -> Result<CrystalGraph, GraphError> {
    let lattice = s.lattice()?;
    build_graph_in(s, &lattice, cfg)
}

/// Like [`build_graph`] but with an explicit lattice matrix, e.g. a rotated
/// copy of the structure's own.
pub fn build_graph_in(s: &CrystalStructure, lattice: &Lattice, cfg: &GraphConfig) -> Result<CrystalGraph, GraphError> {
    cfg.validate()?;
    let expanded;
    let s = if cfg.expand_symmetry && !s.is_expanded() {
        expanded = expand_symmetry(s);
        &expanded
    } else {
        s
    };
    let spec = AtomFeatureSpec::default();
    let basis = cfg.basis();
    let mut node_features = Vec::with_capacity(s.sites.len() * spec.width());
    for site in &s.sites {
        node_features.extend(atom_features(site.z, &spec)?);
    }
    let neighbors = neighbor_search_in(lattice, &s.frac_coords(), cfg.cutoff, cfg.max_neighbors);
    let mut edge_features = Vec::with_capacity(neighbors.edges.len() * basis.len());
    for e in &neighbors.edges {
        basis.expand_into(e.distance, &mut edge_features);
    }
    Ok(CrystalGraph {
        num_nodes: s.sites.len(),
        atomic_numbers: s.sites.iter().map(|x| x.z).collect(),
        node_features,
        atom_feature_dim: spec.width(),
        edges: neighbors.edges,
        edge_features,
        edge_feature_dim: basis.len(),
    })
}
