//! Desk-scale REINFORCE run on SD1 6x3 instances.
//!
//! cargo run --release --example train_reinforce -- --seed 2 --epochs 10 --out runs/r2

use std::path::PathBuf;

use clap::Parser;
use fjsp_rl::train::{train, Algorithm, TrainConfig};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> fjsp_rl::Result<()> {
    let args = Args::parse();
    let config = TrainConfig {
        algorithm: Algorithm::Reinforce,
        seed: args.seed,
        epochs: args.epochs,
        out_dir: args.out,
        ..TrainConfig::default()
    };
    let (report, _) = train(config)?;
    println!("untrained greedy validation mean: {:.2}", report.initial_validation);
    for e in &report.epochs {
        println!(
            "epoch {:3}  loss {:10.4}  train {:7.2}  valid {:7.2}{}  {:.1}s",
            e.epoch,
            e.loss,
            e.mean_makespan,
            e.validation_mean_makespan,
            if e.best { " *" } else { "" },
            e.wall_secs
        );
    }
    println!("best epoch {} with {:.2}", report.best_epoch, report.best_validation);
    Ok(())
}
