mod common;

use common::{full_model_gradient_check, invariance_errors};
use matfuse::model::{FusionConfig, FusionMode};

#[test]
fn predictions_invariant_under_relabel_translate_rotate() {
    for seed in 0..10 {
        let [perm, shift, rot] = invariance_errors(seed);
        assert!(perm <= 1e-9, "seed {seed}: permutation {perm:e}");
        assert!(shift <= 1e-9, "seed {seed}: translation {shift:e}");
        assert!(rot <= 1e-9, "seed {seed}: rotation {rot:e}");
    }
}

#[test]
fn gradient_check_on_real_crystals() {
    for mode in [FusionMode::Vector, FusionMode::Token] {
        let report = full_model_gradient_check(
            FusionConfig {
                mode,
                ..FusionConfig::default()
            },
            3,
        );
        assert!(report.passed(), "{mode:?}: {:?}", report.worst());
    }
}
