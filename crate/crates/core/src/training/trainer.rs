use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Real, Tape};
use crate::config::RunConfig;
use crate::model::{ForwardMode, FusionModel, InputDims};
use crate::text::{TokenSequence, Vocab, CLS, UNK};

use super::dataset::make_batch;
use super::{
    cosine_warmup_lr, mae, r_squared, tokenize_samples, warmup_steps, AdamW, Checkpoint, Normalizer, Sample,
    TrainingError,
};

/// One line of the per-epoch metric log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer steps completed.
    pub step: usize,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
    /// Mean batch MSE over the epoch, in normalized target units.
    pub train_loss: f64,
    pub val_mae: f64,
    /// Whether this epoch became the retained checkpoint.
    pub best: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Parameters with the lowest validation MAE (initialization for zero
    /// epochs).
    pub best: Checkpoint<T>,
    /// Parameters after the final step.
    pub last: Checkpoint<T>,
    pub log: Vec<EpochRecord>,
    /// Batch loss of every step in order, normalized units.
    pub step_losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub target: f64,
    pub prediction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub mae: f64,
    pub r2: f64,
    pub predictions: Vec<Prediction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainShift {
    /// Fraction of real non-CLS tokens mapped to UNK.
    pub unk_fraction: f64,
    /// Fraction of targets outside the training target range.
    pub out_of_range_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZeroShotReport {
    pub evaluation: Evaluation,
    pub shift: DomainShift,
}

fn dims_for(samples: &[Sample], vocab: &Vocab, max_len: usize) -> InputDims {
    InputDims {
        atom_features: samples[0].graph.atom_feature_dim,
        edge_features: samples[0].graph.edge_feature_dim,
        vocab_size: vocab.len(),
        max_len,
    }
}

/// Eval-mode predictions in target units, batched in index order.
fn predict_indices<T: Real>(
    model: &FusionModel<T>,
    normalizer: &Normalizer,
    samples: &[Sample],
    tokens: &[TokenSequence],
    batch_size: usize,
) -> Result<Vec<f64>, TrainingError> {
    let order: Vec<usize> = (0..samples.len()).collect();
    let mut out = Vec::with_capacity(samples.len());
    for chunk in order.chunks(batch_size) {
        let batch = make_batch(samples, tokens, chunk)?;
        out.extend(model.predict(&batch)?.into_iter().map(|z| normalizer.denormalize(z)));
    }
    Ok(out)
}

/// Minibatch MSE training on z-scored targets with AdamW and a cosine warmup
/// schedule evaluated at steps `1..=T`. The vocabulary comes from the
/// training texts only. All randomness derives from `config.seed`.
pub fn train<T: Real>(config: &RunConfig, train: &[Sample], val: &[Sample]) -> Result<TrainOutcome<T>, TrainingError> {
    let tc = &config.train;
    tc.validate()?;
    if train.is_empty() {
        return Err(TrainingError::EmptySplit("train"));
    }
    if val.is_empty() {
        return Err(TrainingError::EmptySplit("val"));
    }
    if let Some(s) = train.iter().chain(val).find(|s| !s.target.is_finite()) {
        return Err(TrainingError::NonFiniteTarget(s.id.clone()));
    }
    let max_len = config.text.max_len;
    if max_len < 2 {
        return Err(TrainingError::InvalidConfig("text.max_len must be at least 2".into()));
    }
    let texts: Vec<&str> = train.iter().map(|s| s.text.as_str()).collect();
    let vocab = Vocab::build(&texts, config.text.min_freq)?;
    let train_tokens = tokenize_samples(train, &vocab, max_len);
    let val_tokens = tokenize_samples(val, &vocab, max_len);
    let targets: Vec<f64> = train.iter().map(|s| s.target).collect();
    let normalizer = Normalizer::fit(&targets);
    let z: Vec<f64> = targets.iter().map(|&y| normalizer.normalize(y)).collect();
    let target_range = [
        targets.iter().copied().fold(f64::INFINITY, f64::min),
        targets.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    ];

    let mut model = FusionModel::<T>::new(
        config.model.clone(),
        config.fusion.clone(),
        dims_for(train, &vocab, max_len),
        config.seed,
    )?;
    let snapshot = |model: &FusionModel<T>, step: usize| Checkpoint {
        model: model.clone(),
        vocab: vocab.clone(),
        normalizer,
        graph: config.graph.clone(),
        text: config.text.clone(),
        train: tc.clone(),
        seed: config.seed,
        step,
        target_range,
    };

    let steps_per_epoch = train.len().div_ceil(tc.batch_size);
    let total = tc.epochs * steps_per_epoch;
    let warmup = warmup_steps(total, tc.warmup_fraction);
    let mut opt = AdamW::new(&model.params, tc.beta1, tc.beta2, tc.eps, tc.weight_decay);
    // Separate streams so dropout draws never shift the batch order.
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    order_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(2);

    let mut best = snapshot(&model, 0);
    let mut best_mae = f64::INFINITY;
    let mut log = Vec::with_capacity(tc.epochs);
    let mut step_losses = Vec::with_capacity(total);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0;
    let mut lr = 0.0;
    for epoch in 1..=tc.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(tc.batch_size) {
            step += 1;
            lr = cosine_warmup_lr(step, warmup, total, tc.learning_rate);
            // Canonical order inside a batch keeps full-batch losses independent of the shuffle.
            let mut members = chunk.to_vec();
            members.sort_unstable();
            let batch = make_batch(train, &train_tokens, &members)?;
            let batch_targets: Vec<f64> = members.iter().map(|&i| z[i]).collect();
            let mode = ForwardMode::Train {
                dropout_seed: dropout_rng.random(),
            };
            let mut tape = Tape::new();
            let loss = model.loss(&mut tape, &batch, &batch_targets, mode)?;
            let loss_value = tape.value(loss).item().as_f64();
            if !loss_value.is_finite() {
                log::error!("non-finite loss at step {step}");
                return Err(TrainingError::NonFiniteLoss {
                    step,
                    last_good: best.to_bytes(),
                });
            }
            tape.backward(loss)?;
            model.params.zero_grad();
            model.params.accumulate_from(&tape);
            opt.step(&mut model.params, lr)?;
            if !model.params.all_finite() {
                log::error!("non-finite parameters after step {step}");
                return Err(TrainingError::NonFiniteLoss {
                    step,
                    last_good: best.to_bytes(),
                });
            }
            step_losses.push(loss_value);
            epoch_loss += loss_value;
        }
        let val_pred = predict_indices(&model, &normalizer, val, &val_tokens, tc.batch_size)?;
        let val_targets: Vec<f64> = val.iter().map(|s| s.target).collect();
        let val_mae = mae(&val_targets, &val_pred);
        let improved = val_mae < best_mae;
        if improved {
            best_mae = val_mae;
            best = snapshot(&model, step);
        }
        let record = EpochRecord {
            epoch,
            step,
            lr,
            train_loss: epoch_loss / steps_per_epoch as f64,
            val_mae,
            best: improved,
        };
        log::info!(
            "epoch {epoch} step {step} lr {lr:.3e} train_loss {:.5} val_mae {val_mae:.5}",
            record.train_loss
        );
        log.push(record);
    }
    let last = snapshot(&model, step);
    Ok(TrainOutcome {
        best,
        last,
        log,
        step_losses,
    })
}

/// MAE, R² and per-record predictions of `checkpoint` on `samples`.
pub fn evaluate<T: Real>(
    checkpoint: &Checkpoint<T>,
    samples: &[Sample],
    batch_size: usize,
) -> Result<Evaluation, TrainingError> {
    if samples.is_empty() {
        return Err(TrainingError::EmptySplit("evaluation"));
    }
    let tokens = tokenize_samples(samples, &checkpoint.vocab, checkpoint.model.dims.max_len);
    let predicted = predict_indices(
        &checkpoint.model,
        &checkpoint.normalizer,
        samples,
        &tokens,
        batch_size.max(1),
    )?;
    let targets: Vec<f64> = samples.iter().map(|s| s.target).collect();
    Ok(Evaluation {
        mae: mae(&targets, &predicted),
        r2: r_squared(&targets, &predicted),
        predictions: samples
            .iter()
            .zip(&predicted)
            .map(|(s, &p)| Prediction {
                id: s.id.clone(),
                target: s.target,
                prediction: p,
            })
            .collect(),
    })
}

/// [`evaluate`] on foreign data plus how far it sits from the training
/// distribution.
pub fn zero_shot_eval<T: Real>(
    checkpoint: &Checkpoint<T>,
    samples: &[Sample],
    batch_size: usize,
) -> Result<ZeroShotReport, TrainingError> {
    let evaluation = evaluate(checkpoint, samples, batch_size)?;
    let tokens = tokenize_samples(samples, &checkpoint.vocab, checkpoint.model.dims.max_len);
    let (mut unknown, mut real) = (0usize, 0usize);
    for seq in &tokens {
        for (&id, &m) in seq.ids.iter().zip(&seq.mask) {
            if m && id != CLS {
                real += 1;
                unknown += usize::from(id == UNK);
            }
        }
    }
    let [lo, hi] = checkpoint.target_range;
    let outside = samples.iter().filter(|s| s.target < lo || s.target > hi).count();
    Ok(ZeroShotReport {
        evaluation,
        shift: DomainShift {
            unk_fraction: if real == 0 { 0.0 } else { unknown as f64 / real as f64 },
            out_of_range_fraction: outside as f64 / samples.len() as f64,
        },
    })
}

/// Fused embeddings of `samples`, one row of width `fusion_dim` each.
pub fn embeddings<T: Real>(
    checkpoint: &Checkpoint<T>,
    samples: &[Sample],
    batch_size: usize,
) -> Result<Vec<Vec<f64>>, TrainingError> {
    let tokens = tokenize_samples(samples, &checkpoint.vocab, checkpoint.model.dims.max_len);
    let order: Vec<usize> = (0..samples.len()).collect();
    let mut out = Vec::with_capacity(samples.len());
    for chunk in order.chunks(batch_size.max(1)) {
        out.extend(checkpoint.model.embed(&make_batch(samples, &tokens, chunk)?)?);
    }
    Ok(out)
}
