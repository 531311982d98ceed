//! Runs the four classic dispatching rules over a benchmark directory and
//! reports the instance-wise average gap to the reference upper bounds.
//!
//! cargo run --release --example benchmark_suite -- data/taillard data/references.csv

use std::path::PathBuf;

use fjsp_rl::eval::{average_gap, benchmark_suite, write_results_csv, ReferenceTable, Solver};
use fjsp_rl::rules::Rule;

fn main() -> fjsp_rl::Result<()> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let mut args = std::env::args().skip(1);
    let dir = args.next().map_or_else(|| root.join("taillard"), PathBuf::from);
    let refs = args.next().map_or_else(|| root.join("references.csv"), PathBuf::from);
    let refs = ReferenceTable::load(&refs)?;
    for rule in Rule::CLASSIC {
        let results = benchmark_suite(&dir, &Solver::Rule(rule), &refs, 0)?;
        let gap = average_gap(&results).map_or("n/a".to_string(), |g| format!("{g:.2}%"));
        println!("{:<6} {} instances, average gap {gap}", rule.name(), results.len());
        if rule == Rule::Mwkr {
            write_results_csv(&results, std::fs::File::create("mwkr_results.csv")?, false)?;
        }
    }
    println!("MWKR rows written to mwkr_results.csv");
    Ok(())
}
