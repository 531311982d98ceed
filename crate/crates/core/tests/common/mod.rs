#![allow(dead_code)]

pub mod grad;
pub mod invariants;

use std::collections::HashMap;
use std::sync::Arc;

use fjsp_rl::env::{Action, RewardMode, SchedulingState};
use fjsp_rl::instance::{Alternative, Instance, Job, OperationSpec, Time};
use fjsp_rl::policy::{Policy, PolicyConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random flexible instance with at most `max_ops` operations in total.
pub fn random_instance<R: Rng>(rng: &mut R, max_jobs: usize, max_machines: usize, max_ops: usize, max_dur: Time) -> Instance {
    let m = rng.gen_range(1..=max_machines);
    let jobs_n = rng.gen_range(1..=max_jobs.min(max_ops));
    let mut budget = max_ops - jobs_n;
    let jobs = (0..jobs_n)
        .map(|_| {
            let extra = rng.gen_range(0..=budget.min(3));
            budget -= extra;
            Job {
                operations: (0..1 + extra)
                    .map(|_| {
                        let mut machines: Vec<usize> = (0..m).collect();
                        machines.shuffle(rng);
                        let k = rng.gen_range(1..=m);
                        let mut alts: Vec<Alternative> = machines[..k]
                            .iter()
                            .map(|&machine| Alternative {
                                machine,
                                duration: rng.gen_range(1..=max_dur),
                            })
                            .collect();
                        alts.sort_by_key(|a| a.machine);
                        OperationSpec::new(alts)
                    })
                    .collect(),
            }
        })
        .collect();
    Instance::new(m, jobs, "random").unwrap()
}

/// Uniformly random complete episode; returns the actions and the final state.
pub fn random_episode<R: Rng>(inst: &Arc<Instance>, mode: RewardMode, rng: &mut R) -> (Vec<Action>, Vec<f64>, SchedulingState) {
    let mut s = SchedulingState::new(inst.clone(), mode);
    let (mut actions, mut rewards) = (Vec::new(), Vec::new());
    while !s.is_terminal() {
        let acts = s.feasible_actions();
        let a = acts[rng.gen_range(0..acts.len())];
        rewards.push(s.step(a).unwrap());
        actions.push(a);
    }
    (actions, rewards, s)
}

/// Every complete feasible action sequence of `inst`.
pub fn all_sequences(inst: &Arc<Instance>) -> Vec<Vec<Action>> {
    fn go(s: &SchedulingState, prefix: &mut Vec<Action>, out: &mut Vec<Vec<Action>>) {
        if s.is_terminal() {
            out.push(prefix.clone());
            return;
        }
        for a in s.feasible_actions() {
            let (next, _) = s.stepped(a).unwrap();
            prefix.push(a);
            go(&next, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(&SchedulingState::new(inst.clone(), RewardMode::LowerBound), &mut Vec::new(), &mut out);
    out
}

/// Machine `k` of `inst` becomes machine `perm[k]`.
pub fn permute_machines(inst: &Instance, perm: &[usize]) -> Instance {
    let jobs = inst
        .jobs()
        .iter()
        .map(|j| Job {
            operations: j
                .operations
                .iter()
                .map(|op| {
                    let mut alts: Vec<Alternative> = op
                        .alternatives
                        .iter()
                        .map(|a| Alternative {
                            machine: perm[a.machine],
                            duration: a.duration,
                        })
                        .collect();
                    alts.sort_by_key(|a| a.machine);
                    OperationSpec::new(alts)
                })
                .collect(),
        })
        .collect();
    Instance::new(inst.num_machines(), jobs, inst.meta()).unwrap()
}

/// Job `perm[k]` of the result is job `k` of `inst`.
pub fn permute_jobs(inst: &Instance, perm: &[usize]) -> Instance {
    let mut jobs = vec![None; inst.num_jobs()];
    for (k, j) in inst.jobs().iter().enumerate() {
        jobs[perm[k]] = Some(j.clone());
    }
    Instance::new(inst.num_machines(), jobs.into_iter().map(Option::unwrap).collect(), inst.meta()).unwrap()
}

pub fn permutation<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Logits keyed by `(job, index in job, machine)`.
pub fn keyed_logits(policy: &Policy, state: &SchedulingState) -> HashMap<(usize, usize, usize), f64> {
    let f = fjsp_rl::env::extract_features(state);
    let out = policy.forward(&f).unwrap();
    let inst = state.instance();
    (0..f.num_actions())
        .map(|i| {
            let a = f.action(i);
            ((inst.job_of(a.op), inst.index_in_job(a.op), a.machine), out.logits[i])
        })
        .collect()
}

pub fn small_policy(seed: u64, critic: bool) -> Policy {
    let cfg = PolicyConfig {
        layers: 2,
        heads: 2,
        d_model: 8,
        ffn_dim: 16,
        head_hidden: 8,
        critic_head: critic,
        ..PolicyConfig::default()
    };
    Policy::new(cfg, &mut rng(seed)).unwrap()
}

/// Schedule check written from the problem definition alone: every
/// operation exactly once on an eligible machine with its duration, job
/// order respected, no two bars overlapping on a machine. Returns the
/// recomputed makespan.
pub fn independent_makespan(inst: &Instance, sched: &fjsp_rl::env::Schedule) -> std::result::Result<Time, String> {
    let n = inst.num_operations();
    if sched.ops.len() != n {
        return Err(format!("{} rows for {n} operations", sched.ops.len()));
    }
    let mut rows = vec![None; n];
    for r in &sched.ops {
        if r.op_id >= n || rows[r.op_id].is_some() {
            return Err(format!("operation {} missing or repeated", r.op_id));
        }
        let d = inst.operation(r.op_id).duration_on(r.machine).ok_or("ineligible machine")?;
        if r.finish != r.start + d {
            return Err(format!("operation {} has wrong duration", r.op_id));
        }
        rows[r.op_id] = Some(*r);
    }
    let rows: Vec<_> = rows.into_iter().map(Option::unwrap).collect();
    for j in 0..inst.num_jobs() {
        for w in inst.job_ops(j).collect::<Vec<_>>().windows(2) {
            if rows[w[1]].start < rows[w[0]].finish {
                return Err(format!("job {j} order violated"));
            }
        }
    }
    for a in &rows {
        for b in &rows {
            if a.op_id < b.op_id && a.machine == b.machine && a.start < b.finish && b.start < a.finish {
                return Err(format!("operations {} and {} overlap", a.op_id, b.op_id));
            }
        }
    }
    let ms = rows.iter().map(|r| r.finish).max().unwrap_or(0);
    if ms != sched.makespan() {
        return Err("makespan mismatch".into());
    }
    Ok(ms)
}

/// Number of complete feasible action sequences: interleavings of the job
/// chains times the machine choices.
pub fn sequence_count(inst: &Instance) -> u128 {
    // multinomial coefficient as a product of binomials; every partial
    // product is an integer
    let mut count: u128 = 1;
    let mut total = 0u128;
    for j in inst.jobs() {
        for k in 1..=j.operations.len() as u128 {
            total += 1;
            count = count * total / k;
        }
    }
    for op in inst.operations() {
        count *= op.alternatives.len() as u128;
    }
    count
}
