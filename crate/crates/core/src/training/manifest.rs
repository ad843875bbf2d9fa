use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Split, TrainingError};

/// Root for relative manifest paths when set.
pub const DATA_DIR_ENV: &str = "MATFUSE_DATA_DIR";

/// One manifest line. Paths are relative to the data root unless absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub cif: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub target: f64,
    #[serde(default)]
    pub property: String,
    #[serde(default)]
    pub units: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

/// Parse a JSON-lines manifest. Blank lines are skipped; ids must be unique
/// and targets finite.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>, TrainingError> {
    let file = File::open(path).map_err(|e| TrainingError::io(path, e))?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| TrainingError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| TrainingError::Manifest { line: k + 1, message };
        let record: ManifestRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if !record.target.is_finite() {
            return Err(bad(format!("target of {} is not finite", record.id)));
        }
        if !seen.insert(record.id.clone()) {
            return Err(bad(format!("duplicate id {}", record.id)));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<(), TrainingError> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("manifest records serialize");
        out.push(b'\n');
    }
    File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| TrainingError::io(path, e))
}

/// Resolve a manifest path: absolute paths are kept, relative ones are joined
/// to `$MATFUSE_DATA_DIR` when set, else to `manifest_dir`.
pub fn resolve_data_path(manifest_dir: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        return p.to_path_buf();
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(p),
        _ => manifest_dir.join(p),
    }
}
