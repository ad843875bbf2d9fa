use matfuse::autodiff::Tape;
use matfuse::config::RunConfig;
use matfuse::graph::GraphConfig;
use matfuse::model::{Batch, ForwardMode, FusionMode, ModelConfig};
use matfuse::synthetic::synthetic_samples;
use matfuse::text::tokenize;
use matfuse::training::{
    corruption_sweep, evaluate, robustness_sweep, train, zero_shot_eval, Checkpoint, CorruptionMode, Sample,
    TrainingError,
};

fn graph_config() -> GraphConfig {
    GraphConfig {
        cutoff: 6.0,
        max_neighbors: 6,
        gauss_min: 0.0,
        gauss_max: 6.0,
        gauss_step: 1.0,
        gauss_sigma: 1.0,
        expand_symmetry: true,
    }
}

fn tiny_config(epochs: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.graph = graph_config();
    cfg.text.max_len = 24;
    cfg.model = ModelConfig {
        graph_layers: 1,
        graph_hidden: 8,
        text_layers: 1,
        text_hidden: 8,
        text_heads: 2,
        text_ff: 12,
        fusion_dim: 8,
        fusion_heads: 2,
        ..ModelConfig::default()
    };
    cfg.train.epochs = epochs;
    cfg.train.batch_size = 4;
    cfg.train.learning_rate = 5e-3;
    cfg
}

fn data() -> (Vec<Sample>, Vec<Sample>, Vec<Sample>) {
    let all = synthetic_samples(24, 11, &graph_config()).unwrap();
    (all[..16].to_vec(), all[16..20].to_vec(), all[20..].to_vec())
}

#[test]
fn zero_epochs_returns_initialization() {
    let (tr, va, _) = data();
    let out = train::<f64>(&tiny_config(0), &tr, &va).unwrap();
    assert!(out.log.is_empty() && out.step_losses.is_empty());
    assert_eq!(out.best.step, 0);
    let fresh = matfuse::FusionModel::<f64>::new(
        out.best.model.config.clone(),
        out.best.model.fusion.clone(),
        out.best.model.dims,
        0,
    )
    .unwrap();
    assert_eq!(out.best.model.params, fresh.params);
}

#[test]
fn same_seed_reproduces_logs_exactly() {
    let (tr, va, _) = data();
    let a = train::<f64>(&tiny_config(3), &tr, &va).unwrap();
    let b = train::<f64>(&tiny_config(3), &tr, &va).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.step_losses, b.step_losses);
    assert_eq!(a.best.model.params, b.best.model.params);
    let mut other = tiny_config(3);
    other.seed = 1;
    assert_ne!(train::<f64>(&other, &tr, &va).unwrap().step_losses, a.step_losses);
}

#[test]
fn zero_learning_rate_keeps_loss_constant() {
    let (tr, va, _) = data();
    let mut cfg = tiny_config(4);
    cfg.train.learning_rate = 0.0;
    cfg.train.batch_size = tr.len();
    cfg.fusion.dropout = false;
    let out = train::<f64>(&cfg, &tr, &va).unwrap();
    assert_eq!(out.step_losses.len(), 4);
    assert!(
        out.step_losses.windows(2).all(|w| w[0] == w[1]),
        "{:?}",
        out.step_losses
    );
    assert_eq!(out.last.model.params, out.best.model.params);
}

#[test]
fn log_records_are_consistent() {
    let (tr, va, _) = data();
    let out = train::<f64>(&tiny_config(3), &tr, &va).unwrap();
    assert_eq!(out.log.len(), 3);
    assert_eq!(out.log.last().unwrap().step, 12);
    let best = out.log.iter().filter(|r| r.best).next_back().unwrap();
    assert_eq!(out.best.step, best.step);
    let min = out.log.iter().map(|r| r.val_mae).fold(f64::INFINITY, f64::min);
    assert_eq!(best.val_mae, min);
    // The retained checkpoint reproduces the logged validation MAE.
    assert_eq!(evaluate(&out.best, &va, 4).unwrap().mae, min);
    let line = serde_json::to_string(&out.log[0]).unwrap();
    assert!(line.contains("\"val_mae\"") && line.contains("\"train_loss\""));
}

#[test]
fn divergence_aborts_with_last_good_checkpoint() {
    let (tr, va, _) = data();
    let mut cfg = tiny_config(2);
    cfg.train.learning_rate = 1e300;
    cfg.train.warmup_fraction = 0.0;
    match train::<f64>(&cfg, &tr, &va) {
        Err(TrainingError::NonFiniteLoss { step, last_good }) => {
            assert!(step <= 4, "diverged only at step {step}");
            let ck = Checkpoint::<f64>::from_bytes(&last_good).unwrap();
            assert_eq!(ck.step, 0);
        }
        other => panic!("expected NonFiniteLoss, got {:?}", other.map(|o| o.log)),
    }
}

#[test]
fn non_finite_targets_rejected() {
    let (mut tr, va, _) = data();
    tr[3].target = f64::NAN;
    assert!(matches!(
        train::<f64>(&tiny_config(1), &tr, &va),
        Err(TrainingError::NonFiniteTarget(_))
    ));
}

#[test]
fn empty_splits_rejected() {
    let (tr, va, _) = data();
    assert!(matches!(
        train::<f64>(&tiny_config(1), &[], &va),
        Err(TrainingError::EmptySplit("train"))
    ));
    assert!(matches!(
        train::<f64>(&tiny_config(1), &tr, &[]),
        Err(TrainingError::EmptySplit("val"))
    ));
    let out = train::<f64>(&tiny_config(0), &tr, &va).unwrap();
    assert!(matches!(evaluate(&out.best, &[], 4), Err(TrainingError::EmptySplit(_))));
}

#[test]
fn checkpoint_reload_gives_identical_predictions() {
    let (tr, va, te) = data();
    for mode in [FusionMode::Vector, FusionMode::Token] {
        let mut cfg = tiny_config(2);
        cfg.fusion.mode = mode;
        let out = train::<f64>(&cfg, &tr, &va).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.bin");
        out.best.save(&path).unwrap();
        let back = Checkpoint::<f64>::load(&path).unwrap();
        assert_eq!(evaluate(&back, &te, 4).unwrap(), evaluate(&out.best, &te, 4).unwrap());
        // Raw forward outputs, not just metrics.
        let tokens: Vec<_> = te
            .iter()
            .map(|s| tokenize(&s.text, &back.vocab, cfg.text.max_len))
            .collect();
        let pairs: Vec<_> = te.iter().zip(&tokens).map(|(s, t)| (&s.graph, t)).collect();
        let batch = Batch::new(&pairs).unwrap();
        let run = |ck: &Checkpoint<f64>| {
            let mut tape = Tape::new();
            let out = ck.model.forward(&mut tape, &batch, ForwardMode::Eval).unwrap();
            (tape.value(out.prediction).clone(), tape.value(out.embedding).clone())
        };
        assert_eq!(run(&back), run(&out.best));
    }
}

#[test]
fn zero_shot_on_test_split_matches_evaluate() {
    let (tr, va, te) = data();
    let out = train::<f64>(&tiny_config(2), &tr, &va).unwrap();
    let report = zero_shot_eval(&out.best, &te, 4).unwrap();
    assert_eq!(report.evaluation, evaluate(&out.best, &te, 4).unwrap());
    assert!((0.0..1.0).contains(&report.shift.unk_fraction));

    let foreign: Vec<Sample> = te
        .iter()
        .map(|s| Sample {
            text: "zzqx wubble frindle".into(),
            target: s.target + 1e3,
            ..s.clone()
        })
        .collect();
    let report = zero_shot_eval(&out.best, &foreign, 4).unwrap();
    assert_eq!(report.shift.unk_fraction, 1.0);
    assert_eq!(report.shift.out_of_range_fraction, 1.0);
    assert!(report.evaluation.mae.is_finite());
}

#[test]
fn full_fraction_sweep_row_matches_plain_run() {
    let (tr, va, te) = data();
    let cfg = tiny_config(2);
    let rows = robustness_sweep::<f64>(&cfg, &tr, &va, &te, &[1.0], &[0]).unwrap();
    assert_eq!(rows.len(), 1);
    let plain = train::<f64>(&cfg, &tr, &va).unwrap();
    assert_eq!(
        rows[0].test_mae,
        evaluate(&plain.best, &te, cfg.train.batch_size).unwrap().mae
    );
    assert_eq!(rows[0].train_size, tr.len());
    let rows = robustness_sweep::<f64>(&cfg, &tr, &va, &te, &[0.5, 1.0], &[0, 1]).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].train_size, 8);
}

#[test]
fn zero_corruption_row_matches_baseline() {
    let (tr, va, te) = data();
    let cfg = tiny_config(2);
    let rows = corruption_sweep::<f64>(&cfg, &tr, &va, &te, &[0.0], CorruptionMode::Both, &[0]).unwrap();
    assert_eq!(rows.len(), 1);
    let plain = train::<f64>(&cfg, &tr, &va).unwrap();
    assert_eq!(
        rows[0].test_mae,
        evaluate(&plain.best, &te, cfg.train.batch_size).unwrap().mae
    );
    let curve: Vec<f64> = plain.log.iter().map(|r| r.train_loss).collect();
    assert_eq!(rows[0].train_losses, curve);

    let noisy = corruption_sweep::<f64>(&cfg, &tr, &va, &te, &[0.5], CorruptionMode::Test, &[0]).unwrap();
    // Test-only corruption leaves training untouched.
    assert_eq!(noisy[0].train_losses, curve);
    assert!(corruption_sweep::<f64>(&cfg, &tr, &va, &te, &[1.5], CorruptionMode::Both, &[0]).is_err());
}

#[test]
fn single_precision_training_runs() {
    let (tr, va, te) = data();
    let out = train::<f32>(&tiny_config(2), &tr, &va).unwrap();
    let wide = out.best.cast::<f64>();
    let narrow = evaluate(&out.best, &te, 4).unwrap();
    let promoted = evaluate(&wide, &te, 4).unwrap();
    assert!((narrow.mae - promoted.mae).abs() < 1e-4);
}
