mod common;

use common::{
    check_neighbor_oracle, conv_oracle_error, fuse_oracle_error, random_structure, rng, self_attention_oracle_error,
};

#[test]
fn neighbor_search_matches_brute_force() {
    let mut rng = rng(2024);
    for case in 0..20 {
        let s = random_structure(&mut rng, 4);
        for (cutoff, k) in [(4.0, 3), (6.5, 12)] {
            check_neighbor_oracle(&s, cutoff, k).unwrap_or_else(|e| panic!("case {case}, cutoff {cutoff}: {e}"));
        }
    }
}

#[test]
fn graph_convolution_matches_edge_loop() {
    for seed in 0..5 {
        let err = conv_oracle_error(seed);
        assert!(err <= 1e-12, "seed {seed}: {err:e}");
    }
}

#[test]
fn transformer_block_matches_dense_loop() {
    for seed in 0..5 {
        let err = self_attention_oracle_error(seed);
        assert!(err <= 1e-12, "seed {seed}: {err:e}");
    }
}

#[test]
fn fusion_matches_dense_loop() {
    for seed in 0..3 {
        let err = fuse_oracle_error(seed);
        assert!(err <= 1e-12, "seed {seed}: {err:e}");
    }
}
