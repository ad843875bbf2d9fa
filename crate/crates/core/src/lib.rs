//! Multimodal property regression for crystalline materials.
//!
//! A crystal structure is parsed from CIF, turned into a periodic graph and a
//! templated text description, and the two views are encoded separately (a
//! crystal graph convolution network and a small transformer) before being
//! combined with multi-head cross attention and regressed onto a scalar
//! property.
//!
//! Module map:
//!
//! * [`cif`]: CIF ingestion, symmetry expansion, CIF writing.
//! * [`lattice`]: cell parameters to lattice matrices and back.
//! * [`graph`]: neighbor search, atom features, Gaussian edge features.
//! * [`text`]: structure descriptions, vocabulary, tokenization, corruption.
//! * [`autodiff`]: the dense reverse-mode tape every parameter lives on.
//! * [`model`]: graph encoder, text encoder, fusion and prediction head.
//! * [`training`]: manifests, splits, AdamW, schedules, checkpoints, sweeps.

pub mod autodiff;
pub mod cif;
pub mod config;
pub mod elements;
pub mod graph;
pub mod lattice;
pub mod model;
pub mod synthetic;
pub mod text;
pub mod training;

pub use autodiff::{ParamId, ParamStore, Real, Tape, Tensor, TensorError, Var};
pub use cif::{parse_cif, CifError, CrystalStructure, Site, SymOp};
pub use config::RunConfig;
pub use graph::{build_graph, CrystalGraph, GraphConfig, GraphError};
pub use lattice::Lattice;
pub use model::{FusionModel, ModelConfig};
pub use text::{TokenSequence, Vocab};
