use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::config::RunConfig;
use crate::text::corrupt_text_with;

use super::{evaluate, train, Sample, TrainingError};

/// Which texts the corruption sweep perturbs. Validation texts follow the
/// training texts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionMode {
    Train,
    Test,
    Both,
}

impl CorruptionMode {
    fn corrupts_train(self) -> bool {
        matches!(self, CorruptionMode::Train | CorruptionMode::Both)
    }

    fn corrupts_test(self) -> bool {
        matches!(self, CorruptionMode::Test | CorruptionMode::Both)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub fraction: f64,
    pub seed: u64,
    pub train_size: usize,
    pub test_mae: f64,
    pub test_r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionRow {
    pub p: f64,
    pub seed: u64,
    /// Per-epoch mean training loss.
    pub train_losses: Vec<f64>,
    pub test_mae: f64,
}

/// Sorted indices of a seeded `round(fraction·n)` subset (at least one).
/// Fraction 1 keeps every index.
pub fn subsample_indices(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let k = ((fraction * n as f64).round() as usize).clamp(1.min(n), n);
    if k == n {
        return (0..n).collect();
    }
    let mut picked = sample(&mut ChaCha8Rng::seed_from_u64(seed), n, k).into_vec();
    picked.sort_unstable();
    picked
}

/// For every fraction and seed: subsample the training split, train with that
/// seed, evaluate the retained checkpoint on `test`.
pub fn robustness_sweep<T: Real>(
    config: &RunConfig,
    train_set: &[Sample],
    val: &[Sample],
    test: &[Sample],
    fractions: &[f64],
    seeds: &[u64],
) -> Result<Vec<RobustnessRow>, TrainingError> {
    if let Some(f) = fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
        return Err(TrainingError::InvalidConfig(format!(
            "train fraction {f} outside (0, 1]"
        )));
    }
    let mut rows = Vec::new();
    for &fraction in fractions {
        for &seed in seeds {
            let subset: Vec<Sample> = subsample_indices(train_set.len(), fraction, seed)
                .into_iter()
                .map(|i| train_set[i].clone())
                .collect();
            let run = RunConfig { seed, ..config.clone() };
            let outcome = train::<T>(&run, &subset, val)?;
            let eval = evaluate(&outcome.best, test, run.train.batch_size)?;
            log::info!("fraction {fraction} seed {seed}: test MAE {:.5}", eval.mae);
            rows.push(RobustnessRow {
                fraction,
                seed,
                train_size: subset.len(),
                test_mae: eval.mae,
                test_r2: eval.r2,
            });
        }
    }
    Ok(rows)
}

/// Per-record corruption seed, distinct across splits and runs.
fn record_seed(seed: u64, split: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (split << 56) ^ index as u64
}

fn corrupted(samples: &[Sample], p: f64, seed: u64, split: u64, config: &RunConfig) -> Vec<Sample> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| Sample {
            text: corrupt_text_with(&s.text, p, record_seed(seed, split, i), &config.text.corruption),
            ..s.clone()
        })
        .collect()
}

/// For every corruption probability and seed: corrupt the texts selected by
/// `mode`, train with that seed, evaluate on the test split.
pub fn corruption_sweep<T: Real>(
    config: &RunConfig,
    train_set: &[Sample],
    val: &[Sample],
    test: &[Sample],
    levels: &[f64],
    mode: CorruptionMode,
    seeds: &[u64],
) -> Result<Vec<CorruptionRow>, TrainingError> {
    if let Some(p) = levels.iter().find(|&&p| !(0.0..=1.0).contains(&p)) {
        return Err(TrainingError::InvalidConfig(format!(
            "corruption probability {p} outside [0, 1]"
        )));
    }
    let mut rows = Vec::new();
    for &p in levels {
        for &seed in seeds {
            let keep = |set: &[Sample], split: u64, on: bool| {
                if on {
                    corrupted(set, p, seed, split, config)
                } else {
                    set.to_vec()
                }
            };
            let tr = keep(train_set, 0, mode.corrupts_train());
            let va = keep(val, 1, mode.corrupts_train());
            let te = keep(test, 2, mode.corrupts_test());
            let run = RunConfig { seed, ..config.clone() };
            let outcome = train::<T>(&run, &tr, &va)?;
            let eval = evaluate(&outcome.best, &te, run.train.batch_size)?;
            log::info!("p {p} seed {seed}: test MAE {:.5}", eval.mae);
            rows.push(CorruptionRow {
                p,
                seed,
                train_losses: outcome.log.iter().map(|r| r.train_loss).collect(),
                test_mae: eval.mae,
            });
        }
    }
    Ok(rows)
}
