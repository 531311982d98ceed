mod common;

use common::invariants::*;

const TOL: f64 = 1e-9;

#[test]
fn logits_follow_machine_relabelling() {
    for seed in 0..40 {
        let d = machine_permutation_deviation(seed);
        assert!(d <= TOL, "seed {seed}: {d:e}");
    }
}

#[test]
fn logits_follow_job_relabelling() {
    for seed in 0..40 {
        let d = job_permutation_deviation(seed);
        assert!(d <= TOL, "seed {seed}: {d:e}");
    }
}

#[test]
fn rotary_scores_depend_on_position_differences_only() {
    for seed in 0..40 {
        let d = rope_shift_deviation(seed);
        assert!(d <= TOL, "seed {seed}: {d:e}");
    }
}

#[test]
fn machine_inputs_never_reach_operation_embeddings() {
    for seed in 0..40 {
        assert_eq!(machine_to_operation_leak(seed), 0.0, "seed {seed}");
    }
}

#[test]
fn attention_rows_are_distributions() {
    for seed in 0..40 {
        let d = attention_row_sum_deviation(seed);
        assert!(d <= TOL, "seed {seed}: {d:e}");
    }
}
