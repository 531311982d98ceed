//! Structural checks on the policy network. Each returns the largest
//! absolute deviation found, so callers pick their own tolerance.

use std::sync::Arc;

use fjsp_rl::env::{extract_features, Action, RewardMode, SchedulingState, StateFeatures};
use fjsp_rl::instance::Instance;
use fjsp_rl::numerics::Graph;
use fjsp_rl::policy::Policy;
use rand::Rng;

use super::{keyed_logits, permutation, permute_jobs, permute_machines, random_instance, rng, small_policy};

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A random instance advanced by a random number of random actions.
fn random_partial<R: Rng>(r: &mut R) -> (Arc<Instance>, Vec<Action>) {
    let inst = Arc::new(random_instance(r, 5, 4, 16, 12));
    let mut s = SchedulingState::new(inst.clone(), RewardMode::LowerBound);
    let steps = r.gen_range(0..inst.num_operations());
    let mut actions = Vec::new();
    for _ in 0..steps {
        let acts = s.feasible_actions();
        let a = acts[r.gen_range(0..acts.len())];
        s.step(a).unwrap();
        actions.push(a);
    }
    (inst, actions)
}

fn replay(inst: &Arc<Instance>, actions: &[Action]) -> SchedulingState {
    let mut s = SchedulingState::new(inst.clone(), RewardMode::LowerBound);
    for &a in actions {
        s.step(a).unwrap();
    }
    s
}

/// Relabelling machines relabels the logits and nothing else.
pub fn machine_permutation_deviation(seed: u64) -> f64 {
    let mut r = rng(seed);
    let policy = small_policy(seed, true);
    let (inst, actions) = random_partial(&mut r);
    let perm = permutation(inst.num_machines(), &mut r);
    let other = Arc::new(permute_machines(&inst, &perm));
    let moved: Vec<Action> = actions.iter().map(|a| Action::new(a.op, perm[a.machine])).collect();
    let (s, t) = (replay(&inst, &actions), replay(&other, &moved));
    let a = keyed_logits(&policy, &s);
    let b = keyed_logits(&policy, &t);
    assert_eq!(a.len(), b.len());
    let mut worst = 0.0f64;
    for (&(j, k, m), &x) in &a {
        worst = worst.max((x - b[&(j, k, perm[m])]).abs());
    }
    let va = policy.forward(&extract_features(&s)).unwrap().value.unwrap();
    let vb = policy.forward(&extract_features(&t)).unwrap().value.unwrap();
    worst.max((va - vb).abs())
}

/// Relabelling jobs relabels the logits and nothing else.
pub fn job_permutation_deviation(seed: u64) -> f64 {
    let mut r = rng(seed);
    let policy = small_policy(seed, true);
    let (inst, actions) = random_partial(&mut r);
    let perm = permutation(inst.num_jobs(), &mut r);
    let other = Arc::new(permute_jobs(&inst, &perm));
    let moved: Vec<Action> = actions
        .iter()
        .map(|a| Action::new(other.op_id(perm[inst.job_of(a.op)], inst.index_in_job(a.op)), a.machine))
        .collect();
    let (s, t) = (replay(&inst, &actions), replay(&other, &moved));
    let a = keyed_logits(&policy, &s);
    let b = keyed_logits(&policy, &t);
    assert_eq!(a.len(), b.len());
    let mut worst = 0.0f64;
    for (&(j, k, m), &x) in &a {
        worst = worst.max((x - b[&(perm[j], k, m)]).abs());
    }
    let va = policy.forward(&extract_features(&s)).unwrap().value.unwrap();
    let vb = policy.forward(&extract_features(&t)).unwrap().value.unwrap();
    worst.max((va - vb).abs())
}

fn attention_and_logits(policy: &Policy, f: &StateFeatures) -> (Vec<f64>, Vec<f64>) {
    let g = Graph::inference();
    let fw = policy.forward_graph(&g, f).unwrap();
    let attn = fw.op_attention.iter().flat_map(|a| a.tensor().into_data()).collect();
    (attn, fw.logits.tensor().into_data())
}

/// Adding a constant to every rotary position leaves attention weights and
/// logits unchanged, since only position differences enter the scores.
pub fn rope_shift_deviation(seed: u64) -> f64 {
    let mut r = rng(seed);
    let policy = small_policy(seed, false);
    let (inst, actions) = random_partial(&mut r);
    let f = extract_features(&replay(&inst, &actions));
    let mut shifted = f.clone();
    let c = r.gen_range(1..500);
    shifted.op_position.iter_mut().for_each(|p| *p += c);
    let (a0, l0) = attention_and_logits(&policy, &f);
    let (a1, l1) = attention_and_logits(&policy, &shifted);
    max_abs(&a0, &a1).max(max_abs(&l0, &l1))
}

/// Operation embeddings depend on operation inputs only: the standalone
/// operation branch matches the full pass, and machine inputs do not move it.
pub fn machine_to_operation_leak(seed: u64) -> f64 {
    let mut r = rng(seed);
    let policy = small_policy(seed, true);
    let (inst, actions) = random_partial(&mut r);
    let f = extract_features(&replay(&inst, &actions));
    let flat = |vs: &[fjsp_rl::numerics::Var<'_>]| -> Vec<f64> {
        vs.iter().flat_map(|v| v.tensor().into_data()).collect()
    };
    let g = Graph::inference();
    let (branch, _) = policy.op_branch(&g, &f).unwrap();
    let full = policy.forward_graph(&g, &f).unwrap();
    let mut worst = max_abs(&flat(&branch), &flat(&full.op_embeddings));

    let mut noisy = f.clone();
    noisy.mach_features.iter_mut().for_each(|x| *x += r.gen_range(0.1..3.0));
    noisy.edges.iter_mut().for_each(|e| e.duration *= r.gen_range(0.5..2.0));
    let other = policy.forward_graph(&g, &noisy).unwrap();
    worst = worst.max(max_abs(&flat(&full.op_embeddings), &flat(&other.op_embeddings)));
    worst
}

/// Largest deviation from 1 of any attention row sum, per head, in both
/// branches; also checks masked pairs never appear.
pub fn attention_row_sum_deviation(seed: u64) -> f64 {
    let mut r = rng(seed);
    let policy = small_policy(seed, true);
    let (inst, actions) = random_partial(&mut r);
    let f = extract_features(&replay(&inst, &actions));
    let g = Graph::inference();
    let fw = policy.forward_graph(&g, &f).unwrap();
    let n = f.num_nodes();
    let m = f.num_machines();
    let mut query = Vec::new();
    for a in 0..n {
        query.extend((0..n).filter(|&b| f.o2o_attends(a, b)).map(|_| a));
    }
    let machine: Vec<usize> = (0..m).chain(f.edges.iter().map(|e| e.machine)).collect();
    let mut worst = 0.0f64;
    for (attn, rows, segs) in fw
        .op_attention
        .iter()
        .map(|a| (a, &query, n))
        .chain(fw.mach_attention.iter().map(|a| (a, &machine, m)))
    {
        let t = attn.tensor();
        assert_eq!(t.rows(), rows.len());
        for h in 0..t.cols() {
            let mut sums = vec![0.0; segs];
            for (i, &s) in rows.iter().enumerate() {
                let w = t.get(i, h);
                assert!((0.0..=1.0 + 1e-12).contains(&w));
                sums[s] += w;
            }
            worst = sums.iter().map(|s| (s - 1.0).abs()).fold(worst, f64::max);
        }
    }
    worst
}
