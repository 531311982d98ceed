//! Compares cached and cold forward passes over one episode and reports how
//! much work the cache saved.

use std::sync::Arc;
use std::time::Instant;

use fjsp_rl::env::{extract_features, RewardMode, SchedulingState};
use fjsp_rl::instance::{generate, GeneratorConfig, Variant};
use fjsp_rl::policy::{KvCache, Policy, PolicyConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> fjsp_rl::Result<()> {
    let inst = Arc::new(generate(&GeneratorConfig::new(Variant::Sd1, 20, 10, 3))?);
    let cfg = PolicyConfig {
        d_model: 64,
        heads: 4,
        ffn_dim: 256,
        ..PolicyConfig::default()
    };
    let policy = Policy::new(cfg, &mut ChaCha8Rng::seed_from_u64(1))?;
    let mut state = SchedulingState::new(inst.clone(), RewardMode::LowerBound);
    let mut cache = KvCache::new();
    let (mut cold_t, mut warm_t, mut worst) = (0.0, 0.0, 0.0f64);
    let mut total = [0usize; 4];
    while !state.is_terminal() {
        let f = extract_features(&state);
        let t = Instant::now();
        let cold = policy.forward(&f)?;
        cold_t += t.elapsed().as_secs_f64();
        let t = Instant::now();
        let warm = policy.cached_forward(&inst, &f, &mut cache)?;
        warm_t += t.elapsed().as_secs_f64();
        for (a, b) in cold.probs.iter().zip(&warm.probs) {
            worst = worst.max((a - b).abs());
        }
        let s = cache.stats();
        for (t, x) in total.iter_mut().zip([s.kv_computed, s.kv_reused, s.rows_computed, s.rows_reused]) {
            *t += x;
        }
        state.step(f.action(warm.argmax()))?;
    }
    println!("{} steps, max |p_cold - p_cached| = {worst:.3e}", inst.num_operations());
    println!("key/value rows computed {} reused {}", total[0], total[1]);
    println!("attention rows computed {} reused {}", total[2], total[3]);
    println!("cold {:.3}s, cached {:.3}s", cold_t, warm_t);
    Ok(())
}
