use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use matfuse::cif::{expand_symmetry, parse_cif, CrystalStructure};
use matfuse::config::{Precision, RunConfig};
use matfuse::graph::{build_graph, GraphConfig};
use matfuse::synthetic::write_synthetic_dataset;
use matfuse::text::{corrupt_text_with, describe};
use matfuse::training::{
    self, corruption_sweep, embeddings, evaluate, load_samples, read_manifest, robustness_sweep, split_records,
    write_manifest, zero_shot_eval, Checkpoint, ManifestRecord, Sample, Split, SplitIndices, TrainingError,
};
use matfuse::Real;
use serde_json::json;

use crate::errors::{DataError, MissingArtifact};
use crate::output::{run_dir, write_corruption, write_embeddings, write_log, write_predictions, write_robustness};

macro_rules! with_precision {
    ($precision:expr, $f:ident ( $($arg:expr),* )) => {
        match $precision {
            Precision::F32 => $f::<f32>($($arg),*),
            Precision::F64 => $f::<f64>($($arg),*),
        }
    };
}

fn require(path: &Path) -> anyhow::Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(MissingArtifact(path.to_path_buf()).into())
    }
}

fn read_structure(cfg: &RunConfig, path: &Path) -> anyhow::Result<CrystalStructure> {
    require(path)?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let s = parse_cif(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(if cfg.graph.expand_symmetry {
        expand_symmetry(&s)
    } else {
        s
    })
}

fn load(manifest: &Path, graph: &GraphConfig, threads: usize) -> anyhow::Result<(Vec<ManifestRecord>, Vec<Sample>)> {
    require(manifest)?;
    let records = read_manifest(manifest)?;
    if records.is_empty() {
        return Err(DataError(format!("{} has no records", manifest.display())).into());
    }
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let samples = load_samples(&records, dir, graph, threads)?;
    Ok((records, samples))
}

fn pick(samples: &[Sample], indices: &[usize]) -> Vec<Sample> {
    indices.iter().map(|&i| samples[i].clone()).collect()
}

fn split_sets(samples: &[Sample], split: &SplitIndices) -> (Vec<Sample>, Vec<Sample>, Vec<Sample>) {
    (
        pick(samples, &split.train),
        pick(samples, &split.val),
        pick(samples, &split.test),
    )
}

fn load_checkpoint<T: Real>(path: &Path) -> anyhow::Result<Checkpoint<T>> {
    require(path)?;
    Ok(Checkpoint::<T>::load(path)?)
}

pub fn ingest(
    cfg: &RunConfig,
    cifs: &Path,
    targets: &Path,
    out: &Path,
    property: &str,
    units: &str,
) -> anyhow::Result<()> {
    require(cifs)?;
    require(targets)?;
    let mut target_of: HashMap<String, f64> = HashMap::new();
    let mut reader = csv::Reader::from_path(targets).with_context(|| format!("reading {}", targets.display()))?;
    for row in reader.deserialize::<(String, f64)>() {
        let (id, target) = row.with_context(|| format!("parsing {}", targets.display()))?;
        target_of.insert(id, target);
    }
    let mut paths: Vec<_> = std::fs::read_dir(cifs)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("cif")))
        .collect();
    paths.sort();
    let texts = out.join("texts");
    std::fs::create_dir_all(&texts).with_context(|| format!("creating {}", texts.display()))?;
    let mut records = Vec::new();
    let mut skipped = 0;
    for path in paths {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let Some(&target) = target_of.get(&id) else {
            log::warn!("skipping {id}: no target");
            skipped += 1;
            continue;
        };
        if !target.is_finite() {
            log::warn!("skipping {id}: target is not finite");
            skipped += 1;
            continue;
        }
        let structure = match read_structure(cfg, &path) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("skipping {id}: {e:#}");
                skipped += 1;
                continue;
            }
        };
        let text = match describe(&structure) {
            Ok(t) => t,
            Err(e) => {
                log::warn!("skipping {id}: {e}");
                skipped += 1;
                continue;
            }
        };
        let text_path = texts.join(format!("{id}.txt"));
        std::fs::write(&text_path, text).with_context(|| format!("writing {}", text_path.display()))?;
        records.push(ManifestRecord {
            id,
            cif: std::path::absolute(&path)?.to_string_lossy().into_owned(),
            text: Some(std::path::absolute(&text_path)?.to_string_lossy().into_owned()),
            target,
            property: property.to_string(),
            units: units.to_string(),
            split: None,
        });
    }
    if records.is_empty() {
        return Err(DataError(format!("no usable records in {}", cifs.display())).into());
    }
    write_manifest(&out.join("manifest.jsonl"), &records)?;
    log::info!("wrote {} records, skipped {skipped}", records.len());
    writeln!(
        std::io::stdout(),
        "{}",
        json!({"records": records.len(), "skipped": skipped})
    )?;
    Ok(())
}

pub fn describe_cif(cfg: &RunConfig, cif: &Path) -> anyhow::Result<()> {
    let s = read_structure(cfg, cif)?;
    writeln!(std::io::stdout(), "{}", describe(&s)?)?;
    Ok(())
}

pub fn dump_structure(cfg: &RunConfig, cif: &Path) -> anyhow::Result<()> {
    let s = read_structure(cfg, cif)?;
    let graph = build_graph(&s, &cfg.graph)?;
    let lattice = s.lattice()?;
    let record = json!({
        "structure": s,
        "lattice": lattice.rows(),
        "graph": {
            "num_nodes": graph.num_nodes,
            "atomic_numbers": graph.atomic_numbers,
            "atom_feature_dim": graph.atom_feature_dim,
            "edge_feature_dim": graph.edge_feature_dim,
            "edges": graph.edges,
        },
    });
    writeln!(std::io::stdout(), "{record}")?;
    Ok(())
}

pub fn synth(cfg: &RunConfig, out: &Path, count: usize) -> anyhow::Result<()> {
    let records = write_synthetic_dataset(out, count, cfg.seed)?;
    writeln!(
        std::io::stdout(),
        "{}",
        json!({"records": records.len(), "manifest": out.join("manifest.jsonl")})
    )?;
    Ok(())
}

pub fn train(cfg: &RunConfig, manifest: &Path, threads: usize) -> anyhow::Result<()> {
    with_precision!(cfg.precision, train_as(cfg, manifest, threads))
}

fn train_as<T: Real>(cfg: &RunConfig, manifest: &Path, threads: usize) -> anyhow::Result<()> {
    let (records, samples) = load(manifest, &cfg.graph, threads)?;
    let split = split_records(&records, cfg.train.split, cfg.seed)?;
    let (tr, va, te) = split_sets(&samples, &split);
    log::info!("split {}/{}/{}", tr.len(), va.len(), te.len());
    let dir = run_dir(cfg)?;
    let outcome = match training::train::<T>(cfg, &tr, &va) {
        Ok(o) => o,
        Err(TrainingError::NonFiniteLoss { step, last_good }) => {
            let path = dir.join("checkpoint.bin");
            std::fs::write(&path, &last_good).with_context(|| format!("writing {}", path.display()))?;
            log::error!("last good checkpoint written to {}", path.display());
            return Err(TrainingError::NonFiniteLoss { step, last_good }.into());
        }
        Err(e) => return Err(e.into()),
    };
    outcome.best.save(&dir.join("checkpoint.bin"))?;
    write_log(&dir.join("log.jsonl"), &outcome.log)?;
    let eval = evaluate(&outcome.best, &te, cfg.train.batch_size)?;
    write_predictions(&dir.join("predictions.csv"), Split::Test.name(), &eval.predictions)?;
    writeln!(
        std::io::stdout(),
        "{}",
        json!({"split": "test", "n": te.len(), "mae": eval.mae, "r2": eval.r2, "step": outcome.best.step, "run_dir": dir})
    )?;
    Ok(())
}

pub fn eval(
    cfg: &RunConfig,
    checkpoint: &Path,
    manifest: &Path,
    split: Option<Split>,
    out: Option<&Path>,
    threads: usize,
) -> anyhow::Result<()> {
    with_precision!(cfg.precision, eval_as(cfg, checkpoint, manifest, split, out, threads))
}

fn eval_as<T: Real>(
    cfg: &RunConfig,
    checkpoint: &Path,
    manifest: &Path,
    split: Option<Split>,
    out: Option<&Path>,
    threads: usize,
) -> anyhow::Result<()> {
    let ck = load_checkpoint::<T>(checkpoint)?;
    let (records, samples) = load(manifest, &ck.graph, threads)?;
    let (label, subset) = match split {
        Some(s) => {
            let indices = split_records(&records, ck.train.split, ck.seed)?;
            (s.name(), pick(&samples, indices.get(s)))
        }
        None => ("all", samples),
    };
    let eval = evaluate(&ck, &subset, ck.train.batch_size)?;
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => run_dir(cfg)?.join("predictions.csv"),
    };
    write_predictions(&path, label, &eval.predictions)?;
    writeln!(
        std::io::stdout(),
        "{}",
        json!({"split": label, "n": subset.len(), "mae": eval.mae, "r2": eval.r2})
    )?;
    Ok(())
}

pub fn predict(cfg: &RunConfig, checkpoint: &Path, manifest: &Path, threads: usize) -> anyhow::Result<()> {
    with_precision!(cfg.precision, predict_as(checkpoint, manifest, threads))
}

fn predict_as<T: Real>(checkpoint: &Path, manifest: &Path, threads: usize) -> anyhow::Result<()> {
    let ck = load_checkpoint::<T>(checkpoint)?;
    let (_, samples) = load(manifest, &ck.graph, threads)?;
    let eval = evaluate(&ck, &samples, ck.train.batch_size)?;
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    w.write_record(["id", "prediction"])?;
    for p in &eval.predictions {
        w.write_record([p.id.clone(), p.prediction.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn zeroshot(cfg: &RunConfig, checkpoint: &Path, manifest: &Path, threads: usize) -> anyhow::Result<()> {
    with_precision!(cfg.precision, zeroshot_as(cfg, checkpoint, manifest, threads))
}

fn zeroshot_as<T: Real>(cfg: &RunConfig, checkpoint: &Path, manifest: &Path, threads: usize) -> anyhow::Result<()> {
    let ck = load_checkpoint::<T>(checkpoint)?;
    let (_, samples) = load(manifest, &ck.graph, threads)?;
    let report = zero_shot_eval(&ck, &samples, ck.train.batch_size)?;
    let dir = run_dir(cfg)?;
    write_predictions(
        &dir.join("zeroshot_predictions.csv"),
        "foreign",
        &report.evaluation.predictions,
    )?;
    writeln!(
        std::io::stdout(),
        "{}",
        json!({
            "n": samples.len(),
            "mae": report.evaluation.mae,
            "r2": report.evaluation.r2,
            "unk_fraction": report.shift.unk_fraction,
            "out_of_range_fraction": report.shift.out_of_range_fraction,
        })
    )?;
    Ok(())
}

pub fn sweep_robustness(cfg: &RunConfig, manifest: &Path, threads: usize) -> anyhow::Result<()> {
    with_precision!(cfg.precision, sweep_robustness_as(cfg, manifest, threads))
}

fn sweep_robustness_as<T: Real>(cfg: &RunConfig, manifest: &Path, threads: usize) -> anyhow::Result<()> {
    let (records, samples) = load(manifest, &cfg.graph, threads)?;
    let split = split_records(&records, cfg.train.split, cfg.seed)?;
    let (tr, va, te) = split_sets(&samples, &split);
    let rows = robustness_sweep::<T>(cfg, &tr, &va, &te, &cfg.sweep.train_fractions, &cfg.sweep.seeds)?;
    let dir = run_dir(cfg)?;
    write_robustness(&dir.join("robustness.csv"), &rows)?;
    let mut stdout = std::io::stdout().lock();
    for r in &rows {
        writeln!(stdout, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

pub fn sweep_corruption(cfg: &RunConfig, manifest: &Path, threads: usize) -> anyhow::Result<()> {
    with_precision!(cfg.precision, sweep_corruption_as(cfg, manifest, threads))
}

fn sweep_corruption_as<T: Real>(cfg: &RunConfig, manifest: &Path, threads: usize) -> anyhow::Result<()> {
    let (records, samples) = load(manifest, &cfg.graph, threads)?;
    let split = split_records(&records, cfg.train.split, cfg.seed)?;
    let (tr, va, te) = split_sets(&samples, &split);
    let rows = corruption_sweep::<T>(
        cfg,
        &tr,
        &va,
        &te,
        &cfg.sweep.corruption_levels,
        cfg.sweep.corruption_mode,
        &cfg.sweep.seeds,
    )?;
    let dir = run_dir(cfg)?;
    write_corruption(&dir.join("corruption.csv"), &dir.join("corruption_curves.csv"), &rows)?;
    let mut stdout = std::io::stdout().lock();
    for r in &rows {
        writeln!(stdout, "{}", json!({"p": r.p, "seed": r.seed, "test_mae": r.test_mae}))?;
    }
    Ok(())
}

pub fn export_embeddings(
    cfg: &RunConfig,
    checkpoint: &Path,
    manifest: &Path,
    out: Option<&Path>,
    threads: usize,
) -> anyhow::Result<()> {
    with_precision!(cfg.precision, export_as(checkpoint, manifest, out, threads))
}

fn export_as<T: Real>(checkpoint: &Path, manifest: &Path, out: Option<&Path>, threads: usize) -> anyhow::Result<()> {
    let ck = load_checkpoint::<T>(checkpoint)?;
    let (_, samples) = load(manifest, &ck.graph, threads)?;
    let rows = embeddings(&ck, &samples, ck.train.batch_size)?;
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let targets: Vec<f64> = samples.iter().map(|s| s.target).collect();
    match out {
        Some(path) => {
            let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_embeddings(file, &ids, &rows, &targets)
        }
        None => write_embeddings(std::io::stdout().lock(), &ids, &rows, &targets),
    }
}

pub fn corrupt(cfg: &RunConfig, input: &Path, p: f64, out: Option<&Path>) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(DataError(format!("corruption probability {p} outside [0, 1]")).into());
    }
    require(input)?;
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let noisy = corrupt_text_with(&text, p, cfg.seed, &cfg.text.corruption);
    match out {
        Some(path) => std::fs::write(path, noisy).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().lock().write_all(noisy.as_bytes())?,
    }
    Ok(())
}
