use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::env::{extract_features, RewardMode, SchedulingState, StateFeatures};
use crate::error::{Error, Result};
use crate::instance::{Instance, Time};
use crate::policy::{KvCache, Policy};

/// One decision of an episode.
#[derive(Clone, Debug)]
pub struct Step {
    pub features: StateFeatures,
    /// Index into `features.actions`.
    pub action: usize,
    /// Log-probability of `action` under the collecting parameters.
    pub log_prob: f64,
    pub reward: f64,
    /// Critic estimate of the state, when the policy has a critic.
    pub value: Option<f64>,
}

/// A complete episode; one step per operation.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub instance: Arc<Instance>,
    pub steps: Vec<Step>,
    pub makespan: Time,
    /// Lower-bound makespan of the initial state.
    pub initial_lower_bound: Time,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Samples one episode on `instance`.
pub fn rollout<R: Rng + ?Sized>(
    instance: &Arc<Instance>,
    policy: &Policy,
    reward_mode: RewardMode,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut state = SchedulingState::new(instance.clone(), reward_mode);
    let initial_lower_bound = state.lb_makespan();
    let mut cache = KvCache::new();
    let mut steps = Vec::with_capacity(instance.num_operations());
    while !state.is_terminal() {
        let features = extract_features(&state);
        let out = if policy.config().use_kv_cache {
            policy.cached_forward(instance, &features, &mut cache)?
        } else {
            policy.forward(&features)?
        };
        if out.probs.iter().any(|p| !p.is_finite()) || out.value.is_some_and(|v| !v.is_finite()) {
            return Err(Error::Training("non-finite policy output during rollout".into()));
        }
        let action = out.sample(rng);
        let reward = state.step(features.action(action))?;
        if !reward.is_finite() {
            return Err(Error::Training(format!("non-finite reward {reward}")));
        }
        steps.push(Step {
            log_prob: out.log_probs[action],
            value: out.value,
            features,
            action,
            reward,
        });
    }
    Ok(Trajectory {
        instance: instance.clone(),
        steps,
        makespan: state.makespan()?,
        initial_lower_bound,
    })
}

/// One episode per instance, run in parallel. Episode `i` samples from
/// stream `i` of a generator seeded with `seed`, so the result does not
/// depend on the number of workers.
pub fn collect_rollouts_seeded(
    instances: &[Arc<Instance>],
    policy: &Policy,
    reward_mode: RewardMode,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            rollout(inst, policy, reward_mode, &mut rng)
        })
        .collect()
}

/// [`collect_rollouts_seeded`] with the seed drawn from `rng`.
pub fn collect_rollouts<R: Rng + ?Sized>(
    instances: &[Arc<Instance>],
    policy: &Policy,
    reward_mode: RewardMode,
    rng: &mut R,
) -> Result<Vec<Trajectory>> {
    collect_rollouts_seeded(instances, policy, reward_mode, rng.gen())
}
