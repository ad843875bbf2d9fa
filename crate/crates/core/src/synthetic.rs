//! Seeded synthetic crystals for tests, benchmarks and the ablation checks.
//!
//! Each record's target is `geometry_term + tag_term`: the first depends only
//! on the structure (element electronegativities and nearest-neighbor
//! distances), the second only on a tag word that appears in the text and
//! nowhere in the structure. A model must see both modalities to fit both.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cif::{to_cif, CrystalStructure, Site};
use crate::elements::ElementTable;
use crate::graph::{neighbor_search_in, GraphConfig};
use crate::text::describe;
use crate::training::{write_manifest, ManifestRecord, Sample, TrainingError};

/// Tag words and their contribution to the target.
pub const TAGS: [(&str, f64); 8] = [
    ("amber", -1.5),
    ("cobalt", -1.1),
    ("jade", -0.6),
    ("onyx", -0.2),
    ("pearl", 0.2),
    ("ruby", 0.6),
    ("slate", 1.1),
    ("topaz", 1.5),
];

/// Elements drawn for synthetic sites.
pub const ELEMENTS: [&str; 12] = ["Li", "Na", "K", "Mg", "Ca", "Al", "Si", "O", "S", "Cl", "Ti", "Fe"];

/// Smallest allowed interatomic distance, Å.
pub const MIN_DISTANCE: f64 = 1.8;

/// Cell edges are drawn from this range, Å, so every nearest neighbor lies
/// within a 6 Å cutoff.
pub const EDGE_RANGE: (f64, f64) = (3.5, 5.5);

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticRecord {
    pub structure: CrystalStructure,
    pub tag: usize,
    pub text: String,
    pub geometry_term: f64,
    pub tag_term: f64,
    pub target: f64,
}

/// Per-site nearest-neighbor distances under periodic boundaries.
pub fn nearest_distances(s: &CrystalStructure) -> Vec<f64> {
    let lattice = s.lattice().expect("valid synthetic lattice");
    let neighbors = neighbor_search_in(&lattice, &s.frac_coords(), 2.0 * EDGE_RANGE.1, 1);
    let mut nearest = vec![f64::INFINITY; s.sites.len()];
    for e in &neighbors.edges {
        nearest[e.src] = nearest[e.src].min(e.distance);
    }
    nearest
}

/// Structure part of the target: mean electronegativity plus a linear term in
/// the mean nearest-neighbor distance.
pub fn geometry_term(s: &CrystalStructure) -> f64 {
    let table = ElementTable::get();
    let n = s.sites.len() as f64;
    let chi = s
        .sites
        .iter()
        .map(|site| table.by_z(site.z).expect("known element").electronegativity)
        .sum::<f64>()
        / n;
    let nn = nearest_distances(s).iter().sum::<f64>() / n;
    (chi - 1.8) + 0.6 * (nn - 3.2)
}

/// Random cubic, tetragonal, orthorhombic or hexagonal cell with 1 to 4
/// sites at least [`MIN_DISTANCE`] apart.
pub fn random_structure<R: Rng>(rng: &mut R, id: &str) -> CrystalStructure {
    let edge = |rng: &mut R| rng.random_range(EDGE_RANGE.0..=EDGE_RANGE.1);
    loop {
        let a = edge(rng);
        let cell = match rng.random_range(0..4) {
            0 => [a, a, a, 90.0, 90.0, 90.0],
            1 => [a, a, edge(rng), 90.0, 90.0, 90.0],
            2 => [a, edge(rng), edge(rng), 90.0, 90.0, 90.0],
            _ => [a, a, edge(rng), 90.0, 90.0, 120.0],
        };
        let count = rng.random_range(1..=4);
        let sites: Vec<Site> = (0..count)
            .map(|_| {
                let symbol = ELEMENTS.choose(rng).expect("non-empty");
                Site::new(symbol, [rng.random(), rng.random(), rng.random()]).expect("known element")
            })
            .collect();
        let s = CrystalStructure::new(id, cell, sites, Vec::new()).expect("valid synthetic structure");
        if nearest_distances(&s).iter().all(|&d| d >= MIN_DISTANCE) {
            return s;
        }
    }
}

/// `n` records drawn from `seed`.
pub fn synthetic_records(n: usize, seed: u64) -> Vec<SyntheticRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let structure = random_structure(&mut rng, &format!("syn-{i:05}"));
            let tag = rng.random_range(0..TAGS.len());
            // Tag first so truncation never drops it.
            let text = format!(
                "The sample carries tag {}. {}",
                TAGS[tag].0,
                describe(&structure).expect("valid synthetic lattice")
            );
            let geometry = geometry_term(&structure);
            SyntheticRecord {
                structure,
                tag,
                text,
                geometry_term: geometry,
                tag_term: TAGS[tag].1,
                target: geometry + TAGS[tag].1,
            }
        })
        .collect()
}

/// Featurized synthetic samples.
pub fn synthetic_samples(n: usize, seed: u64, graph: &GraphConfig) -> Result<Vec<Sample>, TrainingError> {
    synthetic_records(n, seed)
        .into_iter()
        .map(|r| {
            Sample::from_structure(
                r.structure.source_id.clone(),
                &r.structure,
                Some(r.text),
                r.target,
                graph,
            )
        })
        .collect()
}

/// Write CIFs, texts and a manifest for `n` synthetic records into `dir`.
pub fn write_synthetic_dataset(dir: &Path, n: usize, seed: u64) -> Result<Vec<ManifestRecord>, TrainingError> {
    let io = |path: &Path, e| TrainingError::io(path, e);
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut records = Vec::with_capacity(n);
    for r in synthetic_records(n, seed) {
        let id = r.structure.source_id.clone();
        let cif = format!("{id}.cif");
        let txt = format!("{id}.txt");
        std::fs::write(dir.join(&cif), to_cif(&r.structure)).map_err(|e| io(&dir.join(&cif), e))?;
        std::fs::write(dir.join(&txt), &r.text).map_err(|e| io(&dir.join(&txt), e))?;
        records.push(ManifestRecord {
            id,
            cif,
            text: Some(txt),
            target: r.target,
            property: "synthetic".into(),
            units: "arb".into(),
            split: None,
        });
    }
    write_manifest(&dir.join("manifest.jsonl"), &records)?;
    Ok(records)
}
