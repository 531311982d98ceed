//! Command-line front end. Every subcommand is a thin wrapper over the
//! library; randomness comes from `--seed` only.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::env::Schedule;
use crate::error::{Error, Result};
use crate::eval::{
    average_gap, benchmark_suite, emit_gantt, evaluate_instance, instance_name, load_benchmark_file,
    write_results_csv, ReferenceTable, Solver,
};
use crate::instance::{generate, write_fjs, GeneratorConfig, Variant};
use crate::policy::Policy;
use crate::rules::Rule;
use crate::train::{Algorithm, Trainer, TrainConfig, LAST_CHECKPOINT};

#[derive(Parser, Debug)]
#[command(name = "fjsp", about = "Flexible job-shop scheduling with dispatching rules and learned policies")]
pub struct Cli {
    /// Root seed for every random choice; 0 when absent, except that
    /// `train` then keeps the config's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub jobs_parallel: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write random instances as .fjs files.
    Generate(GenerateArgs),
    /// Solve one instance file and print its makespan and a results row.
    Solve(SolveArgs),
    /// Train a policy from a TOML config.
    Train(TrainArgs),
    /// Solve every benchmark file in a directory and write a results CSV.
    Bench(BenchArgs),
    /// Render a schedule CSV as SVG and JSON Gantt charts.
    Gantt(GanttArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// sd1, sd2, jssp or ffsp.
    #[arg(long, default_value = "sd1")]
    pub variant: Variant,
    #[arg(long)]
    pub jobs: usize,
    /// Machine count; for ffsp, stages times machines per stage.
    #[arg(long)]
    pub machines: Option<usize>,
    /// FFSP stage count.
    #[arg(long)]
    pub stages: Option<usize>,
    /// FFSP parallel machines per stage.
    #[arg(long)]
    pub machines_per_stage: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Solver choice shared by `solve` and `bench`.
#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
pub struct SolverArgs {
    /// Dispatching rule: fifo, spt, mopnr, mwkr or random.
    #[arg(long)]
    pub rule: Option<Rule>,
    /// Policy checkpoint (JSON).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    /// Argmax decoding (the default for checkpoints).
    #[arg(long, conflicts_with = "sample")]
    pub greedy: bool,
    /// Best of K sampled rollouts.
    #[arg(long, value_name = "K")]
    pub sample: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    pub file: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub decode: DecodeArgs,
    /// Reference table for the gap column.
    #[arg(long)]
    pub refs: Option<PathBuf>,
    /// Write the schedule as CSV here.
    #[arg(long)]
    pub schedule_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// TOML training config; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub algorithm: Option<Algorithm>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from `last.json` in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub refs: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub decode: DecodeArgs,
    /// Results CSV; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GanttArgs {
    #[arg(long)]
    pub schedule: PathBuf,
    /// Instance file, used for the machine count.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Output prefix; writes PREFIX.svg and PREFIX.json.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code: 0 ok, 2 parse error, 3 infeasible or internal
/// invariant, 4 usage or configuration error, 1 anything else.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    run_to(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

/// [`run`] writing to the given streams.
pub fn run_to<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => 4,
            };
        }
    };
    let result = match cli.jobs_parallel {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => {
                let mut buf = Vec::new();
                let r = pool.install(|| dispatch(&cli, &mut buf));
                let _ = out.write_all(&buf);
                r
            }
            Err(e) => Err(Error::Config(format!("thread pool: {e}"))),
        },
        None => dispatch(&cli, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, cli.seed.unwrap_or(0), out),
        Command::Solve(a) => cmd_solve(a, cli.seed.unwrap_or(0), out),
        Command::Train(a) => cmd_train(a, cli.seed, out),
        Command::Bench(a) => cmd_bench(a, cli.seed.unwrap_or(0), out),
        Command::Gantt(a) => cmd_gantt(a, out),
    }
}

fn cmd_generate(a: &GenerateArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    let base = match a.variant {
        Variant::Ffsp => {
            let (Some(s), Some(k)) = (a.stages, a.machines_per_stage) else {
                return Err(Error::Config("ffsp needs --stages and --machines-per-stage".into()));
            };
            GeneratorConfig::ffsp(a.jobs, s, k, seed)
        }
        v => {
            let m = a.machines.ok_or_else(|| Error::Config("--machines is required".into()))?;
            GeneratorConfig::new(v, a.jobs, m, seed)
        }
    };
    std::fs::create_dir_all(&a.out)?;
    for i in 0..a.count {
        // instance i uses seed + i
        let cfg = base.with_seed(seed.wrapping_add(i as u64));
        let inst = generate(&cfg)?;
        let name = format!(
            "{}_{}x{}_{:04}.fjs",
            format!("{:?}", a.variant).to_lowercase(),
            base.num_jobs,
            base.num_machines,
            i
        );
        let path = a.out.join(&name);
        std::fs::write(&path, write_fjs(&inst))?;
        writeln!(out, "{}", path.display())?;
    }
    Ok(())
}

fn load_policy(path: &Path) -> Result<Policy> {
    Policy::load(path)
}

fn solver<'a>(s: &SolverArgs, d: &DecodeArgs, policy: Option<&'a Policy>) -> Result<Solver<'a>> {
    if let Some(rule) = s.rule {
        if d.sample.is_some() || d.greedy {
            return Err(Error::Config("--greedy/--sample apply to --checkpoint only".into()));
        }
        return Ok(Solver::Rule(rule));
    }
    let p = policy.ok_or_else(|| Error::Config("no solver selected".into()))?;
    Ok(match d.sample {
        Some(k) => Solver::Sampling { policy: p, k },
        None => Solver::Greedy(p),
    })
}

fn references(path: Option<&PathBuf>) -> Result<ReferenceTable> {
    path.map_or_else(|| Ok(ReferenceTable::new()), |p| ReferenceTable::load(p))
}

fn cmd_solve(a: &SolveArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    let policy = a.solver.checkpoint.as_deref().map(load_policy).transpose()?;
    let solver = solver(&a.solver, &a.decode, policy.as_ref())?;
    let inst = Arc::new(load_benchmark_file(&a.file)?);
    let name = instance_name(&a.file);
    let refs = references(a.refs.as_ref())?;
    let result = evaluate_instance(&name, &inst, &solver, &refs, seed)?;
    if let Some(path) = &a.schedule_out {
        let (_, schedule) = solver.solve(&inst, seed)?;
        schedule.write_csv(std::fs::File::create(path)?)?;
    }
    writeln!(out, "makespan {}", result.makespan)?;
    write_results_csv(&[result], &mut *out, false)
}

fn cmd_train(a: &TrainArgs, seed: Option<u64>, out: &mut dyn Write) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(alg) = a.algorithm {
        config.algorithm = alg;
    }
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if let Some(o) = &a.out {
        config.out_dir = Some(o.clone());
    }
    let trainer = if a.resume {
        let dir = config
            .out_dir
            .clone()
            .ok_or_else(|| Error::Config("--resume needs an output directory".into()))?;
        Trainer::resume(config, &dir.join(LAST_CHECKPOINT))?
    } else {
        Trainer::new(config)?
    };
    let (report, _) = trainer.run()?;
    writeln!(out, "initial validation {:.4}", report.initial_validation)?;
    report.write_csv(&mut *out, false)?;
    writeln!(out, "best epoch {} validation {:.4}", report.best_epoch, report.best_validation)?;
    Ok(())
}

fn cmd_bench(a: &BenchArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    let policy = a.solver.checkpoint.as_deref().map(load_policy).transpose()?;
    let solver = solver(&a.solver, &a.decode, policy.as_ref())?;
    let refs = references(a.refs.as_ref())?;
    let results = benchmark_suite(&a.dir, &solver, &refs, seed)?;
    match &a.out {
        Some(p) => write_results_csv(&results, std::fs::File::create(p)?, false)?,
        None => write_results_csv(&results, &mut *out, false)?,
    }
    match average_gap(&results) {
        Some(g) => writeln!(out, "instances {} average gap {g:.4}%", results.len())?,
        None => writeln!(out, "instances {} (no reference values)", results.len())?,
    }
    Ok(())
}

fn cmd_gantt(a: &GanttArgs, out: &mut dyn Write) -> Result<()> {
    let text = std::fs::read(&a.schedule)?;
    let probe = Schedule::read_csv(text.as_slice(), 0)?;
    let machines = match &a.instance {
        Some(p) => {
            let inst = load_benchmark_file(p)?;
            probe.validate(&inst)?;
            inst.num_machines()
        }
        None => probe.ops.iter().map(|o| o.machine + 1).max().unwrap_or(0),
    };
    let schedule = Schedule {
        num_machines: machines,
        ..probe
    };
    let gantt = emit_gantt(&schedule)?;
    let svg = a.out.with_extension("svg");
    let json = a.out.with_extension("json");
    std::fs::write(&svg, gantt.to_svg())?;
    std::fs::write(&json, gantt.to_json()?)?;
    writeln!(out, "{}\n{}", svg.display(), json.display())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_to(std::iter::once("fjsp").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap())
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(run_capture(&["solve", "--bogus"]).0, 4);
        assert_eq!(run_capture(&["frobnicate"]).0, 4);
        assert_eq!(run_capture(&["--help"]).0, 0);
    }

    #[test]
    fn solver_flags_are_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.fjs");
        std::fs::write(&f, "1 1\n1 1 1 3\n").unwrap();
        let f = f.to_str().unwrap();
        assert_eq!(run_capture(&["solve", f]).0, 4);
        assert_eq!(run_capture(&["solve", f, "--rule", "spt", "--checkpoint", "x.json"]).0, 4);
        assert_eq!(run_capture(&["solve", f, "--rule", "spt", "--sample", "3"]).0, 4);
        let (code, text) = run_capture(&["solve", f, "--rule", "spt"]);
        assert_eq!(code, 0);
        assert!(text.starts_with("makespan 3\n"));
    }

    #[test]
    fn generate_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for d in [&a, &b] {
            let args = ["generate", "--variant", "sd1", "--jobs", "10", "--machines", "5", "--count", "2", "--seed", "7", "--out"];
            let mut v: Vec<&str> = args.to_vec();
            v.push(d.path().to_str().unwrap());
            assert_eq!(run_capture(&v).0, 0);
        }
        for name in ["sd1_10x5_0000.fjs", "sd1_10x5_0001.fjs"] {
            let x = std::fs::read(a.path().join(name)).unwrap();
            let y = std::fs::read(b.path().join(name)).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn parse_errors_exit_two() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("bad.fjs");
        std::fs::write(&f, "2 1\n1 1 1 x\n").unwrap();
        assert_eq!(run_capture(&["solve", f.to_str().unwrap(), "--rule", "spt"]).0, 2);
    }

    #[test]
    fn train_keeps_the_config_seed_unless_given() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("t.toml");
        let text = "seed = 9\nepochs = 1\ninstances_per_epoch = 4\nbatch_size = 2\nvalidation_size = 2\n\
                    [data]\nnum_jobs = 3\nnum_machines = 2\n\
                    [policy]\nlayers = 1\nheads = 1\nd_model = 4\nffn_dim = 4\nhead_hidden = 4\n";
        std::fs::write(&cfg, text).unwrap();
        for (extra, expected) in [(None, 9), (Some("3"), 3)] {
            let out = dir.path().join(format!("run{expected}"));
            let mut args = vec!["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
            if let Some(s) = extra {
                args.extend(["--seed", s]);
            }
            assert_eq!(run_capture(&args).0, 0);
            let saved = TrainConfig::load(&out.join("config.toml")).unwrap();
            assert_eq!(saved.seed, expected);
        }
    }
}
