use std::sync::Arc;

use rayon::prelude::*;

use super::config::Baseline;
use super::rollout::{Step, Trajectory};
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};
use crate::policy::Policy;

/// `G_t = r_t + gamma G_{t+1}`, with `G` zero after the last step.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Returns minus the batch baseline. With [`Baseline::PerTimestep`] step
/// `t` is centred on the mean over the trajectories that have a step `t`.
pub fn advantages(returns: &[Vec<f64>], baseline: Baseline) -> Vec<Vec<f64>> {
    match baseline {
        Baseline::PerTimestep => {
            let horizon = returns.iter().map(Vec::len).max().unwrap_or(0);
            let mut sum = vec![0.0; horizon];
            let mut count = vec![0usize; horizon];
            for g in returns {
                for (t, &v) in g.iter().enumerate() {
                    sum[t] += v;
                    count[t] += 1;
                }
            }
            returns
                .iter()
                .map(|g| g.iter().enumerate().map(|(t, &v)| v - sum[t] / count[t] as f64).collect())
                .collect()
        }
        Baseline::Batch => {
            let n: usize = returns.iter().map(Vec::len).sum();
            let mean = if n == 0 {
                0.0
            } else {
                returns.iter().flatten().sum::<f64>() / n as f64
            };
            returns.iter().map(|g| g.iter().map(|v| v - mean).collect()).collect()
        }
    }
}

/// `weight * sum_t -A_t log pi(a_t | s_t)` for one trajectory.
pub fn reinforce_loss<'g>(
    g: &'g Graph,
    policy: &Policy,
    steps: &[Step],
    advantages: &[f64],
    weight: f64,
) -> Result<Var<'g>> {
    if steps.len() != advantages.len() {
        return Err(Error::Shape(format!(
            "{} steps but {} advantages",
            steps.len(),
            advantages.len()
        )));
    }
    let mut terms = Vec::with_capacity(steps.len());
    for (s, &a) in steps.iter().zip(advantages) {
        if a == 0.0 {
            continue;
        }
        let fwd = policy.forward_graph(g, &s.features)?;
        let lp = fwd.log_probs.pick(Arc::new(vec![(0, s.action)]))?;
        terms.push(lp.scale(-a * weight));
    }
    if terms.is_empty() {
        return Ok(g.constant(Tensor::scalar(0.0)));
    }
    Ok(Var::concat_rows(&terms)?.sum())
}

/// Gradient and value of the batch loss `(1/B) sum_i L_i`. Trajectories
/// are differentiated in parallel and summed in batch order.
pub fn reinforce_gradients(
    policy: &Policy,
    trajectories: &[Trajectory],
    gamma: f64,
    baseline: Baseline,
    reward_scale: f64,
) -> Result<(Vec<Tensor>, f64)> {
    if trajectories.is_empty() {
        return Err(Error::Training("empty batch".into()));
    }
    let returns: Vec<Vec<f64>> = trajectories
        .iter()
        .map(|t| {
            let r: Vec<f64> = t.steps.iter().map(|s| s.reward * reward_scale).collect();
            discounted_returns(&r, gamma)
        })
        .collect();
    let adv = advantages(&returns, baseline);
    let weight = 1.0 / trajectories.len() as f64;
    let parts = trajectories
        .par_iter()
        .zip(adv.par_iter())
        .map(|(t, a)| {
            let g = Graph::new();
            let loss = reinforce_loss(&g, policy, &t.steps, a, weight)?;
            let value = loss.item();
            Ok((g.backward(loss)?.param_grads(policy.params()), value))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grads = policy.params().zeros_like();
    let mut loss = 0.0;
    for (g, l) in parts {
        for (acc, x) in grads.iter_mut().zip(&g) {
            acc.add_assign(x);
        }
        loss += l;
    }
    Ok((grads, loss))
}

/// Euclidean norm over every gradient entry.
pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().flat_map(|g| g.data()).map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.scale_assign(s);
        }
    }
    norm
}
