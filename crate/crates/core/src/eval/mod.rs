//! Decoders, gap computation, benchmark tables and Gantt export.

mod gantt;
mod reference;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gantt::{emit_gantt, Gantt, GanttBar};
pub use reference::{Reference, ReferenceTable};

use crate::env::{extract_features, RewardMode, Schedule, SchedulingState};
use crate::error::{Error, Result};
use crate::instance::{lower_bound_static, parse_dmu, parse_fjs, parse_taillard_jssp, Instance, Time};
use crate::policy::{KvCache, Policy, PolicyOutput};
use crate::rules::{pdr_rollout, Rule};

/// Runs one episode, choosing each action index from the policy output.
pub(crate) fn policy_rollout(
    instance: &Arc<Instance>,
    policy: &Policy,
    mut choose: impl FnMut(&PolicyOutput) -> usize,
) -> Result<(Time, Schedule)> {
    let mut state = SchedulingState::new(instance.clone(), RewardMode::LowerBound);
    let mut cache = KvCache::new();
    while !state.is_terminal() {
        let f = extract_features(&state);
        let out = if policy.config().use_kv_cache {
            policy.cached_forward(instance, &f, &mut cache)?
        } else {
            policy.forward(&f)?
        };
        state.step(f.action(choose(&out)))?;
    }
    let schedule = state.schedule();
    let makespan = state.makespan()?;
    let check = schedule.validate(instance)?;
    if check != makespan {
        return Err(Error::Invariant(format!(
            "environment makespan {makespan} but schedule recomputes to {check}"
        )));
    }
    Ok((makespan, schedule))
}

/// Argmax action at every step.
pub fn decode_greedy(instance: &Arc<Instance>, policy: &Policy) -> Result<(Time, Schedule)> {
    policy_rollout(instance, policy, PolicyOutput::argmax)
}

/// Outcome of best-of-k sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledDecode {
    pub best: Time,
    pub schedule: Schedule,
    /// Makespan of every sample, in sample order.
    pub makespans: Vec<Time>,
}

impl SampledDecode {
    pub fn mean(&self) -> f64 {
        self.makespans.iter().sum::<Time>() as f64 / self.makespans.len() as f64
    }
}

/// `k` independent rollouts sampling the exact categorical policy output.
/// Sample `i` draws from stream `i` of a generator seeded once from `rng`,
/// so the first `k` samples are the same for every larger `k`.
pub fn decode_sampling<R: Rng + ?Sized>(
    instance: &Arc<Instance>,
    policy: &Policy,
    k: usize,
    rng: &mut R,
) -> Result<SampledDecode> {
    if k == 0 {
        return Err(Error::Config("sampling needs k >= 1".into()));
    }
    let base: u64 = rng.gen();
    let runs = (0..k)
        .into_par_iter()
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(base);
            r.set_stream(i as u64);
            policy_rollout(instance, policy, |out| out.sample(&mut r))
        })
        .collect::<Result<Vec<_>>>()?;
    let makespans: Vec<Time> = runs.iter().map(|r| r.0).collect();
    // first minimum wins ties
    let best_idx = (0..k).min_by_key(|&i| (makespans[i], i)).expect("k >= 1");
    let (best, schedule) = runs.into_iter().nth(best_idx).expect("index in range");
    Ok(SampledDecode {
        best,
        schedule,
        makespans,
    })
}

/// `100 (makespan - reference) / reference`.
pub fn gap(makespan: Time, reference: Time) -> Result<f64> {
    if reference == 0 {
        return Err(Error::Config("gap reference must be positive".into()));
    }
    Ok(100.0 * (makespan as f64 - reference as f64) / reference as f64)
}

/// What produces a schedule for each instance.
#[derive(Clone, Copy, Debug)]
pub enum Solver<'a> {
    Rule(Rule),
    Greedy(&'a Policy),
    Sampling { policy: &'a Policy, k: usize },
}

impl Solver<'_> {
    pub fn name(&self) -> String {
        match self {
            Solver::Rule(r) => r.name().to_string(),
            Solver::Greedy(_) => "greedy".into(),
            Solver::Sampling { k, .. } => format!("sample{k}"),
        }
    }

    /// Makespan and schedule; `seed` feeds the stochastic solvers.
    pub fn solve(&self, instance: &Arc<Instance>, seed: u64) -> Result<(Time, Schedule)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match *self {
            Solver::Rule(rule) => pdr_rollout(instance, rule, &mut rng),
            Solver::Greedy(p) => decode_greedy(instance, p),
            Solver::Sampling { policy, k } => {
                let d = decode_sampling(instance, policy, k, &mut rng)?;
                Ok((d.best, d.schedule))
            }
        }
    }
}

/// Version of the results CSV layout, written in every row.
pub const RESULTS_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub instance: String,
    pub solver: String,
    pub jobs: usize,
    pub machines: usize,
    pub operations: usize,
    pub lower_bound: Time,
    pub makespan: Time,
    pub reference: Option<Time>,
    /// Present exactly when `reference` is.
    pub gap: Option<f64>,
    pub wall_secs: f64,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    schema_version: u32,
    instance: &'a str,
    solver: &'a str,
    jobs: usize,
    machines: usize,
    operations: usize,
    lower_bound: Time,
    makespan: Time,
    reference: Option<Time>,
    gap: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_secs: Option<String>,
}

/// Solves one named instance and fills in the reference gap if known.
pub fn evaluate_instance(
    name: &str,
    instance: &Arc<Instance>,
    solver: &Solver<'_>,
    references: &ReferenceTable,
    seed: u64,
) -> Result<EvalResult> {
    let t0 = Instant::now();
    let (makespan, schedule) = solver.solve(instance, seed)?;
    let wall_secs = t0.elapsed().as_secs_f64();
    schedule.validate(instance)?;
    let reference = references.get(name).map(|r| r.ub);
    Ok(EvalResult {
        instance: name.to_string(),
        solver: solver.name(),
        jobs: instance.num_jobs(),
        machines: instance.num_machines(),
        operations: instance.num_operations(),
        lower_bound: lower_bound_static(instance).makespan,
        makespan,
        reference,
        gap: reference.map(|r| gap(makespan, r)).transpose()?,
        wall_secs,
    })
}

/// Reads a benchmark file, choosing the parser from its name: `.fjs` files
/// are flexible instances, `dmu*` files use the DMU layout and anything
/// else is read as a Taillard job shop.
pub fn load_benchmark_file(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path)?;
    let name = instance_name(path);
    let inst = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("fjs")) {
        parse_fjs(&text)?
    } else if name.starts_with("dmu") {
        parse_dmu(&text)?
    } else {
        parse_taillard_jssp(&text)?
    };
    Ok(inst.with_meta(name))
}

/// Lower-cased file stem.
pub fn instance_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().to_lowercase())
        .unwrap_or_default()
}

const BENCHMARK_EXTENSIONS: [&str; 4] = ["fjs", "txt", "jss", "dmu"];

/// Benchmark files directly inside `dir`, sorted by file name.
pub fn benchmark_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|e| BENCHMARK_EXTENSIONS.iter().any(|x| e.eq_ignore_ascii_case(x)))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Solves every benchmark file in `dir`. Rows come back in file-name order;
/// instance `i` gets seed stream `i` of `seed`.
pub fn benchmark_suite(dir: &Path, solver: &Solver<'_>, references: &ReferenceTable, seed: u64) -> Result<Vec<EvalResult>> {
    let files = benchmark_files(dir)?;
    let instances = files
        .iter()
        .map(|p| Ok((instance_name(p), Arc::new(load_benchmark_file(p)?))))
        .collect::<Result<Vec<_>>>()?;
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = instances.iter().map(|_| seeder.gen()).collect();
    instances
        .par_iter()
        .zip(seeds.par_iter())
        .map(|((name, inst), &s)| evaluate_instance(name, inst, solver, references, s))
        .collect()
}

/// Mean of the available gaps; `None` if no row has a reference.
pub fn average_gap(results: &[EvalResult]) -> Option<f64> {
    let gaps: Vec<f64> = results.iter().filter_map(|r| r.gap).collect();
    (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64)
}

/// Results as CSV. Wall time is left out unless asked for, so reruns of a
/// deterministic solver give identical bytes.
pub fn write_results_csv<W: Write>(results: &[EvalResult], writer: W, with_timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in results {
        w.serialize(CsvRow {
            schema_version: RESULTS_SCHEMA_VERSION,
            instance: &r.instance,
            solver: &r.solver,
            jobs: r.jobs,
            machines: r.machines,
            operations: r.operations,
            lower_bound: r.lower_bound,
            makespan: r.makespan,
            reference: r.reference,
            gap: r.gap.map(|g| format!("{g:.4}")),
            wall_secs: with_timing.then(|| format!("{:.6}", r.wall_secs)),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate, instance_from_lists, GeneratorConfig, Variant};
    use crate::policy::PolicyConfig;

    fn policy(seed: u64) -> Policy {
        let cfg = PolicyConfig {
            layers: 1,
            heads: 2,
            d_model: 8,
            ffn_dim: 16,
            head_hidden: 8,
            ..PolicyConfig::default()
        };
        Policy::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn sd1(seed: u64) -> Arc<Instance> {
        Arc::new(generate(&GeneratorConfig::new(Variant::Sd1, 4, 3, seed)).unwrap())
    }

    #[test]
    fn gap_values() {
        assert_eq!(gap(110, 100).unwrap(), 10.0);
        assert_eq!(gap(100, 100).unwrap(), 0.0);
        assert_eq!(gap(95, 100).unwrap(), -5.0);
        assert!(gap(5, 0).is_err());
    }

    #[test]
    fn greedy_is_deterministic_and_bounded() {
        let p = policy(1);
        let inst = sd1(3);
        let a = decode_greedy(&inst, &p).unwrap();
        let b = decode_greedy(&inst, &p).unwrap();
        assert_eq!(a, b);
        assert!(a.0 >= lower_bound_static(&inst).makespan);
    }

    #[test]
    fn greedy_on_one_job_is_feasible() {
        let inst = Arc::new(instance_from_lists(2, &[&[&[(0, 3), (1, 5)], &[(1, 2)], &[(0, 4), (1, 1)]]]).unwrap());
        let (ms, s) = decode_greedy(&inst, &policy(2)).unwrap();
        assert_eq!(s.validate(&inst).unwrap(), ms);
    }

    #[test]
    fn sampling_prefix_and_mean() {
        let p = policy(4);
        let inst = sd1(5);
        let ten = decode_sampling(&inst, &p, 10, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let five = decode_sampling(&inst, &p, 5, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(&ten.makespans[..5], &five.makespans[..]);
        assert!(ten.best <= five.best);
        assert!(ten.best as f64 <= ten.mean());
        assert_eq!(ten.schedule.validate(&inst).unwrap(), ten.best);
        assert!(decode_sampling(&inst, &p, 0, &mut ChaCha8Rng::seed_from_u64(8)).is_err());
    }

    #[test]
    fn results_csv_is_stable() {
        let refs = ReferenceTable::from_pairs([("a", 10)]);
        let inst = sd1(1);
        let rows = vec![
            evaluate_instance("a", &inst, &Solver::Rule(Rule::Spt), &refs, 0).unwrap(),
            evaluate_instance("b", &inst, &Solver::Rule(Rule::Spt), &refs, 0).unwrap(),
        ];
        assert!(rows[0].gap.is_some());
        assert!(rows[1].gap.is_none());
        let mut x = Vec::new();
        let mut y = Vec::new();
        write_results_csv(&rows, &mut x, false).unwrap();
        write_results_csv(&rows, &mut y, false).unwrap();
        assert_eq!(x, y);
        let text = String::from_utf8(x).unwrap();
        assert!(text.starts_with("schema_version,instance,solver,"));
        assert_eq!(average_gap(&rows), rows[0].gap);
    }
}
