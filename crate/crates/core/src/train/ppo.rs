use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::config::PpoConfig;
use super::rollout::Trajectory;
use crate::env::StateFeatures;
use crate::error::{Error, Result};
use crate::numerics::{Adam, Graph, Tensor, Var};
use crate::policy::Policy;

/// Generalised advantage estimates and returns (`advantages + values`).
/// `values` has one entry per state including the terminal one, which is 0.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if values.len() != rewards.len() + 1 {
        return Err(Error::Shape(format!(
            "{} rewards need {} values, got {}",
            rewards.len(),
            rewards.len() + 1,
            values.len()
        )));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * values[t + 1] - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

/// One buffered decision with everything the clipped objective needs.
#[derive(Clone, Debug)]
pub struct Transition {
    pub features: StateFeatures,
    pub action: usize,
    pub old_log_prob: f64,
    pub old_value: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Flattens trajectories into transitions, in trajectory order.
pub fn build_buffer(trajectories: &[Trajectory], cfg: &PpoConfig, reward_scale: f64) -> Result<Vec<Transition>> {
    let mut buffer = Vec::new();
    for t in trajectories {
        let unit = if cfg.duration_units { t.instance.max_duration() as f64 } else { 1.0 };
        let rewards: Vec<f64> = t.steps.iter().map(|s| s.reward * reward_scale / unit).collect();
        let mut values = t
            .steps
            .iter()
            .map(|s| s.value.ok_or_else(|| Error::Training("PPO needs value estimates in the trajectory".into())))
            .collect::<Result<Vec<f64>>>()?;
        values.push(0.0);
        let (adv, ret) = gae(&rewards, &values, cfg.gamma, cfg.lambda)?;
        for (i, s) in t.steps.iter().enumerate() {
            buffer.push(Transition {
                features: s.features.clone(),
                action: s.action,
                old_log_prob: s.log_prob,
                old_value: values[i],
                advantage: adv[i],
                ret: ret[i],
            });
        }
    }
    Ok(buffer)
}

/// Loss components, each averaged over the transitions it was computed on.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PpoLosses {
    pub policy: f64,
    pub value: f64,
    /// Mean policy entropy (the loss term is its negation).
    pub entropy: f64,
    pub total: f64,
    /// Fraction of transitions whose ratio left the clip range.
    pub clip_fraction: f64,
}

struct Terms<'g> {
    total: Var<'g>,
    policy: f64,
    value: f64,
    entropy: f64,
    clipped: usize,
}

/// `weight * sum` of the per-transition objective
/// `-min(r A, clip(r) A) + c_v max((V-R)^2, (V_old + clip(V-V_old) - R)^2) - c_e H`.
fn transition_terms<'g>(
    g: &'g Graph,
    policy: &Policy,
    batch: &[&Transition],
    cfg: &PpoConfig,
    weight: f64,
) -> Result<Terms<'g>> {
    let mut parts = Vec::with_capacity(batch.len());
    let (mut pl, mut vl, mut ent, mut clipped) = (0.0, 0.0, 0.0, 0);
    for tr in batch {
        let fwd = policy.forward_graph(g, &tr.features)?;
        let value = fwd
            .value
            .ok_or_else(|| Error::Training("PPO needs a policy with a critic".into()))?;
        let lp = fwd.log_probs.pick(Arc::new(vec![(0, tr.action)]))?;
        let ratio = lp.add_scalar(-tr.old_log_prob).exp();
        let r = ratio.item();
        if !r.is_finite() {
            return Err(Error::Training("non-finite probability ratio".into()));
        }
        if (r - 1.0).abs() > cfg.clip {
            clipped += 1;
        }
        let surrogate = ratio
            .scale(tr.advantage)
            .minimum(ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip).scale(tr.advantage))?;
        let policy_term = surrogate.neg();

        let err = value.add_scalar(-tr.ret);
        let unclipped = err.mul(err)?;
        let v_clip = value
            .add_scalar(-tr.old_value)
            .clamp(-cfg.clip, cfg.clip)
            .add_scalar(tr.old_value - tr.ret);
        let value_term = unclipped.maximum(v_clip.mul(v_clip)?)?;

        // sum p log p = -H
        let neg_entropy = fwd.log_probs.exp().mul(fwd.log_probs)?.sum();

        pl += policy_term.item();
        vl += value_term.item();
        ent -= neg_entropy.item();
        let total = policy_term
            .add(value_term.scale(cfg.value_coef))?
            .add(neg_entropy.scale(cfg.entropy_coef))?;
        parts.push(total.scale(weight));
    }
    Ok(Terms {
        total: Var::concat_rows(&parts)?.sum(),
        policy: pl,
        value: vl,
        entropy: ent,
        clipped,
    })
}

/// Mean clipped objective over `batch` as a scalar on `g`.
pub fn ppo_loss<'g>(g: &'g Graph, policy: &Policy, batch: &[&Transition], cfg: &PpoConfig) -> Result<Var<'g>> {
    if batch.is_empty() {
        return Err(Error::Training("empty minibatch".into()));
    }
    Ok(transition_terms(g, policy, batch, cfg, 1.0 / batch.len() as f64)?.total)
}

/// Transitions differentiated together on one graph; fixed so results do
/// not depend on the worker count.
const CHUNK: usize = 16;

/// Gradient of the mean objective over `batch`.
pub fn ppo_gradients(policy: &Policy, batch: &[&Transition], cfg: &PpoConfig) -> Result<(Vec<Tensor>, PpoLosses)> {
    if batch.is_empty() {
        return Err(Error::Training("empty minibatch".into()));
    }
    let weight = 1.0 / batch.len() as f64;
    let parts = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let g = Graph::new();
            let t = transition_terms(&g, policy, chunk, cfg, weight)?;
            let grads = g.backward(t.total)?.param_grads(policy.params());
            Ok((grads, t.total.item(), t.policy, t.value, t.entropy, t.clipped))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grads = policy.params().zeros_like();
    let mut losses = PpoLosses::default();
    let mut clipped = 0;
    for (g, total, p, v, e, c) in parts {
        for (acc, x) in grads.iter_mut().zip(&g) {
            acc.add_assign(x);
        }
        losses.total += total;
        losses.policy += p * weight;
        losses.value += v * weight;
        losses.entropy += e * weight;
        clipped += c;
    }
    losses.clip_fraction = clipped as f64 / batch.len() as f64;
    Ok((grads, losses))
}

/// `cfg.epochs` passes over the shuffled buffer in minibatches of
/// `cfg.minibatch` transitions, one optimiser step per minibatch. Returns
/// the losses averaged over all minibatches.
pub fn ppo_update<R: Rng + ?Sized>(
    buffer: &[Transition],
    policy: &mut Policy,
    opt: &mut Adam,
    cfg: &PpoConfig,
    grad_clip: Option<f64>,
    rng: &mut R,
) -> Result<PpoLosses> {
    if buffer.is_empty() {
        return Err(Error::Training("empty PPO buffer".into()));
    }
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let mut sum = PpoLosses::default();
    let mut steps = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for idx in order.chunks(cfg.minibatch) {
            let batch: Vec<&Transition> = idx.iter().map(|&i| &buffer[i]).collect();
            let (mut grads, l) = ppo_gradients(policy, &batch, cfg)?;
            if let Some(c) = grad_clip {
                super::reinforce::clip_global_norm(&mut grads, c);
            }
            opt.step(policy.params_mut(), &grads)?;
            sum.policy += l.policy;
            sum.value += l.value;
            sum.entropy += l.entropy;
            sum.total += l.total;
            sum.clip_fraction += l.clip_fraction;
            steps += 1;
        }
    }
    let n = steps as f64;
    Ok(PpoLosses {
        policy: sum.policy / n,
        value: sum.value / n,
        entropy: sum.entropy / n,
        total: sum.total / n,
        clip_fraction: sum.clip_fraction / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gae_degenerate_cases() {
        let r = [1.0, 2.0, 3.0];
        let v = [0.5, 0.25, 1.0, 0.0];
        let (a, ret) = gae(&r, &v, 0.9, 0.0).unwrap();
        for t in 0..3 {
            assert!((a[t] - (r[t] + 0.9 * v[t + 1] - v[t])).abs() < 1e-12);
            assert!((ret[t] - a[t] - v[t]).abs() < 1e-12);
        }
        let (a, _) = gae(&r, &v, 1.0, 1.0).unwrap();
        for t in 0..3 {
            let tail: f64 = r[t..].iter().sum();
            assert!((a[t] - (tail - v[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_by_hand() {
        // delta_1 = 1 + 0 - 0.5 = 0.5; delta_0 = 1 + 0.5 - 0.5 = 1
        // A_1 = 0.5; A_0 = 1 + 0.98 * 0.5 = 1.49
        let (a, ret) = gae(&[1.0, 1.0], &[0.5, 0.5, 0.0], 1.0, 0.98).unwrap();
        assert!((a[0] - 1.49).abs() < 1e-12);
        assert!((a[1] - 0.5).abs() < 1e-12);
        assert!((ret[0] - 1.99).abs() < 1e-12);
        assert!((ret[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gae_length_mismatch() {
        assert!(gae(&[1.0], &[0.0], 1.0, 0.9).is_err());
    }
}
