use std::path::Path;

use rayon::prelude::*;

use crate::cif::{expand_symmetry, parse_cif, CrystalStructure};
use crate::graph::{build_graph, CrystalGraph, GraphConfig, GraphError};
use crate::model::Batch;
use crate::text::{describe, tokenize, TokenSequence, Vocab};

use super::{resolve_data_path, ManifestRecord, TrainingError};

/// A featurized record: graph, raw description text and target.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub graph: CrystalGraph,
    pub text: String,
    pub target: f64,
}

impl Sample {
    /// Build the graph from `structure`; without `text` the templated
    /// description of the expanded structure is used.
    pub fn from_structure(
        id: impl Into<String>,
        structure: &CrystalStructure,
        text: Option<String>,
        target: f64,
        config: &GraphConfig,
    ) -> Result<Sample, TrainingError> {
        let expanded = if config.expand_symmetry && !structure.is_expanded() {
            expand_symmetry(structure)
        } else {
            structure.clone()
        };
        let graph = build_graph(&expanded, config)?;
        let text = match text {
            Some(t) => t,
            None => describe(&expanded).map_err(GraphError::from)?,
        };
        Ok(Sample {
            id: id.into(),
            graph,
            text,
            target,
        })
    }
}

fn load_one(record: &ManifestRecord, manifest_dir: &Path, config: &GraphConfig) -> Result<Sample, TrainingError> {
    let cif_path = resolve_data_path(manifest_dir, &record.cif);
    let cif = std::fs::read_to_string(&cif_path).map_err(|e| TrainingError::io(&cif_path, e))?;
    let structure = parse_cif(&cif).map_err(|source| TrainingError::Cif {
        id: record.id.clone(),
        source,
    })?;
    let text = match &record.text {
        Some(p) => {
            let path = resolve_data_path(manifest_dir, p);
            Some(std::fs::read_to_string(&path).map_err(|e| TrainingError::io(&path, e))?)
        }
        None => None,
    };
    Sample::from_structure(record.id.clone(), &structure, text, record.target, config)
}

/// Parse and featurize every record, in manifest order. `threads > 1` spreads
/// the work over a worker pool; the result does not depend on the count.
pub fn load_samples(
    records: &[ManifestRecord],
    manifest_dir: &Path,
    config: &GraphConfig,
    threads: usize,
) -> Result<Vec<Sample>, TrainingError> {
    config.validate()?;
    if threads <= 1 {
        return records.iter().map(|r| load_one(r, manifest_dir, config)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| TrainingError::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| records.par_iter().map(|r| load_one(r, manifest_dir, config)).collect())
}

/// Token sequences of every sample's text under `vocab`.
pub fn tokenize_samples(samples: &[Sample], vocab: &Vocab, max_len: usize) -> Vec<TokenSequence> {
    samples.iter().map(|s| tokenize(&s.text, vocab, max_len)).collect()
}

pub(crate) fn make_batch(
    samples: &[Sample],
    tokens: &[TokenSequence],
    indices: &[usize],
) -> Result<Batch, TrainingError> {
    let pairs: Vec<(&CrystalGraph, &TokenSequence)> =
        indices.iter().map(|&i| (&samples[i].graph, &tokens[i])).collect();
    Ok(Batch::new(&pairs)?)
}
