//! Central-difference check of the full policy under the REINFORCE and
//! PPO objectives.

use std::sync::Arc;

use fjsp_rl::env::RewardMode;
use fjsp_rl::instance::{generate, GeneratorConfig, Variant};
use fjsp_rl::numerics::finite_diff_check;
use fjsp_rl::policy::{Policy, PolicyConfig};
use fjsp_rl::train::{build_buffer, collect_rollouts_seeded, ppo_loss, reinforce_loss, PpoConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> fjsp_rl::Result<()> {
    let cfg = PolicyConfig {
        layers: 2,
        heads: 2,
        d_model: 8,
        ffn_dim: 16,
        head_hidden: 8,
        critic_head: true,
        ..PolicyConfig::default()
    };
    let policy = Policy::new(cfg, &mut ChaCha8Rng::seed_from_u64(3))?;
    let inst = Arc::new(generate(&GeneratorConfig::new(Variant::Sd1, 3, 2, 9))?);
    let trajs = collect_rollouts_seeded(&[inst], &policy, RewardMode::LowerBound, 1)?;
    let steps = trajs[0].steps.clone();
    let adv: Vec<f64> = (0..steps.len()).map(|t| 1.0 - 0.2 * t as f64).collect();
    let r = finite_diff_check(
        policy.params(),
        |g, store| reinforce_loss(g, &policy.with_params(store)?, &steps, &adv, 1.0),
        1e-5,
        4,
    )?;
    println!("REINFORCE: {} entries, max relative error {:.2e} at {:?}", r.checked, r.max_rel_error, r.worst);

    let ppo = PpoConfig::default();
    let buffer = build_buffer(&trajs, &ppo, 0.05)?;
    let batch: Vec<_> = buffer.iter().collect();
    let r = finite_diff_check(
        policy.params(),
        |g, store| ppo_loss(g, &policy.with_params(store)?, &batch, &ppo),
        1e-5,
        4,
    )?;
    println!("PPO:       {} entries, max relative error {:.2e} at {:?}", r.checked, r.max_rel_error, r.worst);
    Ok(())
}
