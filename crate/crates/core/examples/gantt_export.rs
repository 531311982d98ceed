//! Solves an instance with MWKR and writes its Gantt chart as SVG and JSON.
//!
//! cargo run --example gantt_export -- [instance.fjs] [out_prefix]

use std::path::PathBuf;
use std::sync::Arc;

use fjsp_rl::eval::{emit_gantt, load_benchmark_file};
use fjsp_rl::instance::{generate, GeneratorConfig, Variant};
use fjsp_rl::rules::{pdr_rollout, Rule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> fjsp_rl::Result<()> {
    let mut args = std::env::args().skip(1);
    let inst = match args.next() {
        Some(p) => load_benchmark_file(p.as_ref())?,
        None => generate(&GeneratorConfig::new(Variant::Sd1, 6, 3, 1))?,
    };
    let prefix = PathBuf::from(args.next().unwrap_or_else(|| "gantt".into()));
    let inst = Arc::new(inst);
    let (makespan, schedule) = pdr_rollout(&inst, Rule::Mwkr, &mut ChaCha8Rng::seed_from_u64(0))?;
    let gantt = emit_gantt(&schedule)?;
    std::fs::write(prefix.with_extension("svg"), gantt.to_svg())?;
    std::fs::write(prefix.with_extension("json"), gantt.to_json()?)?;
    schedule.write_csv(std::fs::File::create(prefix.with_extension("csv"))?)?;
    println!("makespan {makespan}, {} bars on {} machines", gantt.num_bars(), gantt.machines.len());
    println!("wrote {}.{{svg,json,csv}}", prefix.display());
    Ok(())
}
