use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use matfuse::config::RunConfig;
use matfuse::training::{CorruptionRow, EpochRecord, Prediction, RobustnessRow};

/// `output_dir/name`, created if needed, with the resolved config echoed as
/// `config.toml`.
pub fn run_dir(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let dir = Path::new(&cfg.output_dir).join(&cfg.name);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let echo = toml::to_string(cfg).context("serializing the resolved config")?;
    std::fs::write(dir.join("config.toml"), echo).with_context(|| format!("writing config in {}", dir.display()))?;
    Ok(dir)
}

fn csv_writer(path: &Path) -> anyhow::Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_predictions(path: &Path, split: &str, predictions: &[Prediction]) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["id", "split", "target", "prediction"])?;
    for p in predictions {
        w.write_record([
            p.id.clone(),
            split.to_string(),
            p.target.to_string(),
            p.prediction.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_log(path: &Path, log: &[EpochRecord]) -> anyhow::Result<()> {
    let mut out = Vec::new();
    for record in log {
        serde_json::to_writer(&mut out, record)?;
        out.push(b'\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn write_robustness(path: &Path, rows: &[RobustnessRow]) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["fraction", "seed", "train_size", "test_mae", "test_r2"])?;
    for r in rows {
        w.write_record([
            r.fraction.to_string(),
            r.seed.to_string(),
            r.train_size.to_string(),
            r.test_mae.to_string(),
            r.test_r2.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Summary table plus the per-epoch loss curves in long format.
pub fn write_corruption(summary: &Path, curves: &Path, rows: &[CorruptionRow]) -> anyhow::Result<()> {
    let mut w = csv_writer(summary)?;
    w.write_record(["p", "seed", "test_mae", "final_train_loss"])?;
    for r in rows {
        let last = r.train_losses.last().copied().unwrap_or(f64::NAN);
        w.write_record([
            r.p.to_string(),
            r.seed.to_string(),
            r.test_mae.to_string(),
            last.to_string(),
        ])?;
    }
    w.flush()?;
    let mut w = csv_writer(curves)?;
    w.write_record(["p", "seed", "epoch", "train_loss"])?;
    for r in rows {
        for (epoch, loss) in r.train_losses.iter().enumerate() {
            w.write_record([
                r.p.to_string(),
                r.seed.to_string(),
                (epoch + 1).to_string(),
                loss.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `id, e0 … e{d-1}, target` rows.
pub fn write_embeddings<W: Write>(out: W, ids: &[String], rows: &[Vec<f64>], targets: &[f64]) -> anyhow::Result<()> {
    let width = rows.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string()];
    header.extend((0..width).map(|k| format!("e{k}")));
    header.push("target".into());
    w.write_record(&header)?;
    for ((id, row), target) in ids.iter().zip(rows).zip(targets) {
        let mut record = vec![id.clone()];
        record.extend(row.iter().map(f64::to_string));
        record.push(target.to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
