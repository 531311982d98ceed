//! Greedy against best-of-k sampling for a policy, trained briefly or loaded.
//!
//! cargo run --release --example decode_sampling -- [checkpoint.json]

use std::sync::Arc;

use fjsp_rl::eval::{decode_greedy, decode_sampling};
use fjsp_rl::instance::{generate, GeneratorConfig, Variant};
use fjsp_rl::policy::Policy;
use fjsp_rl::train::{train, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> fjsp_rl::Result<()> {
    let policy = match std::env::args().nth(1) {
        Some(path) => Policy::load(path.as_ref())?,
        None => train(TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        })?
        .1,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut greedy, mut best, mut mean) = (0.0, 0.0, 0.0);
    let n = 20;
    for i in 0..n {
        let inst = Arc::new(generate(&GeneratorConfig::new(Variant::Sd1, 6, 3, 5000 + i))?);
        let g = decode_greedy(&inst, &policy)?.0;
        let s = decode_sampling(&inst, &policy, 100, &mut rng)?;
        println!("instance {i:2}: greedy {g:4}  best of 100 {:4}  sample mean {:7.2}", s.best, s.mean());
        greedy += g as f64;
        best += s.best as f64;
        mean += s.mean();
    }
    let n = n as f64;
    println!("means: greedy {:.2}  best of 100 {:.2}  sample {:.2}", greedy / n, best / n, mean / n);
    Ok(())
}
