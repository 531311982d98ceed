//! Draws instances from each training distribution and writes them as `.fjs`.
//!
//! cargo run --example generate_instances -- out_dir

use std::path::PathBuf;

use fjsp_rl::instance::{generate, lower_bound_static, write_fjs, GeneratorConfig, Variant};

fn main() -> fjsp_rl::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "generated".into()));
    std::fs::create_dir_all(&dir)?;
    let configs = [
        GeneratorConfig::new(Variant::Sd1, 10, 5, 7),
        GeneratorConfig::new(Variant::Sd2, 10, 5, 7),
        GeneratorConfig::new(Variant::Jssp, 6, 6, 7),
        GeneratorConfig::ffsp(20, 3, 4, 7),
    ];
    for cfg in &configs {
        let inst = generate(cfg)?;
        let path = dir.join(format!("{}.fjs", inst.meta()));
        std::fs::write(&path, write_fjs(&inst))?;
        println!(
            "{:<28} jobs {:3} machines {:3} ops {:4} flexibility {:.2} lower bound {}",
            path.display(),
            inst.num_jobs(),
            inst.num_machines(),
            inst.num_operations(),
            inst.flexibility(),
            lower_bound_static(&inst).makespan
        );
    }
    Ok(())
}
