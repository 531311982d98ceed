//! Mean makespan of every dispatching rule on a batch of SD1 instances.
//!
//! cargo run --release --example dispatch_rules -- 100

use std::sync::Arc;

use fjsp_rl::instance::{generate, lower_bound_static, GeneratorConfig, Variant};
use fjsp_rl::rules::{pdr_rollout, Rule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> fjsp_rl::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let instances = (0..n)
        .map(|i| Ok(Arc::new(generate(&GeneratorConfig::new(Variant::Sd1, 10, 5, i as u64))?)))
        .collect::<fjsp_rl::Result<Vec<_>>>()?;
    let lb = instances.iter().map(|i| lower_bound_static(i).makespan as f64).sum::<f64>() / n as f64;
    println!("SD1 10x5, {n} instances, mean lower bound {lb:.2}");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for rule in [Rule::Fifo, Rule::Spt, Rule::Mopnr, Rule::Mwkr, Rule::RandomUniform] {
        let mut total = 0.0;
        for inst in &instances {
            let (ms, schedule) = pdr_rollout(inst, rule, &mut rng)?;
            assert_eq!(schedule.validate(inst)?, ms);
            total += ms as f64;
        }
        println!("{:<7} mean makespan {:8.2}", rule.name(), total / n as f64);
    }
    Ok(())
}
