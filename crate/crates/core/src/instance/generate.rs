use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Alternative, Instance, Job, OperationSpec, Time};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Durations in [1, 20], roughly `num_machines` operations per job.
    Sd1,
    /// Durations in [1, 99], between 1 and `num_machines` operations per job.
    Sd2,
    /// Classic job shop: every job visits every machine once.
    Jssp,
    /// Flexible flow shop: identical stage routing, parallel machines per stage.
    Ffsp,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sd1" => Ok(Variant::Sd1),
            "sd2" => Ok(Variant::Sd2),
            "jssp" => Ok(Variant::Jssp),
            "ffsp" => Ok(Variant::Ffsp),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub variant: Variant,
    pub num_jobs: usize,
    pub num_machines: usize,
    #[serde(default)]
    pub stages: Option<usize>,
    #[serde(default)]
    pub machines_per_stage: Option<usize>,
    pub rng_seed: u64,
}

impl GeneratorConfig {
    pub fn new(variant: Variant, num_jobs: usize, num_machines: usize, rng_seed: u64) -> Self {
        Self {
            variant,
            num_jobs,
            num_machines,
            stages: None,
            machines_per_stage: None,
            rng_seed,
        }
    }

    /// FFSP layout: `stages` stations with `machines_per_stage` parallel machines each.
    pub fn ffsp(num_jobs: usize, stages: usize, machines_per_stage: usize, rng_seed: u64) -> Self {
        Self {
            variant: Variant::Ffsp,
            num_jobs,
            num_machines: stages * machines_per_stage,
            stages: Some(stages),
            machines_per_stage: Some(machines_per_stage),
            rng_seed,
        }
    }

    pub fn with_seed(&self, rng_seed: u64) -> Self {
        Self {
            rng_seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_jobs == 0 || self.num_machines == 0 {
            return Err(Error::Config("num_jobs and num_machines must be positive".into()));
        }
        if self.variant == Variant::Ffsp {
            let (Some(s), Some(k)) = (self.stages, self.machines_per_stage) else {
                return Err(Error::Config("FFSP needs stages and machines_per_stage".into()));
            };
            if s == 0 || k == 0 || s * k != self.num_machines {
                return Err(Error::Config(format!(
                    "FFSP layout {s} stages x {k} machines does not match num_machines = {}",
                    self.num_machines
                )));
            }
        }
        Ok(())
    }

    /// Inclusive range of operations per job for the SD variants.
    pub fn ops_per_job_range(&self) -> (usize, usize) {
        let m = self.num_machines as f64;
        match self.variant {
            Variant::Sd1 => {
                let lo = ((0.8 * m).round() as usize).max(1);
                let hi = ((1.2 * m).round() as usize).max(lo);
                (lo, hi)
            }
            Variant::Sd2 => (1, self.num_machines),
            Variant::Jssp => (self.num_machines, self.num_machines),
            Variant::Ffsp => {
                let s = self.stages.unwrap_or(1);
                (s, s)
            }
        }
    }
}

fn rng_for(config: &GeneratorConfig) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(config.rng_seed)
}

fn tag(config: &GeneratorConfig) -> String {
    format!(
        "{:?}-{}x{}-seed{}",
        config.variant, config.num_jobs, config.num_machines, config.rng_seed
    )
    .to_lowercase()
}

/// Dispatch on `config.variant`.
pub fn generate(config: &GeneratorConfig) -> Result<Instance> {
    match config.variant {
        Variant::Sd1 | Variant::Sd2 => generate_sd(config),
        Variant::Jssp => generate_jssp(config),
        Variant::Ffsp => generate_ffsp(config),
    }
}

/// SD1 / SD2 synthetic FJSP instances.
pub fn generate_sd(config: &GeneratorConfig) -> Result<Instance> {
    config.validate()?;
    let max_duration: Time = match config.variant {
        Variant::Sd1 => 20,
        Variant::Sd2 => 99,
        other => return Err(Error::Config(format!("generate_sd called with {other:?}"))),
    };
    let m = config.num_machines;
    let (lo, hi) = config.ops_per_job_range();
    let mut rng = rng_for(config);
    let jobs = (0..config.num_jobs)
        .map(|_| {
            let n_ops = rng.gen_range(lo..=hi);
            let operations = (0..n_ops)
                .map(|_| {
                    let n_alts = rng.gen_range(1..=m);
                    let mut machines = sample(&mut rng, m, n_alts).into_vec();
                    machines.sort_unstable();
                    OperationSpec::new(
                        machines
                            .into_iter()
                            .map(|machine| Alternative {
                                machine,
                                duration: rng.gen_range(1..=max_duration),
                            })
                            .collect(),
                    )
                })
                .collect();
            Job { operations }
        })
        .collect();
    Instance::new(m, jobs, tag(config))
}

/// Taillard-style JSSP: each job is a random machine permutation, durations in [1, 99].
pub fn generate_jssp(config: &GeneratorConfig) -> Result<Instance> {
    config.validate()?;
    if config.variant != Variant::Jssp {
        return Err(Error::Config(format!("generate_jssp called with {:?}", config.variant)));
    }
    let m = config.num_machines;
    let mut rng = rng_for(config);
    let jobs = (0..config.num_jobs)
        .map(|_| {
            let mut route: Vec<usize> = (0..m).collect();
            route.shuffle(&mut rng);
            Job {
                operations: route
                    .into_iter()
                    .map(|machine| {
                        OperationSpec::new(vec![Alternative {
                            machine,
                            duration: rng.gen_range(1..=99),
                        }])
                    })
                    .collect(),
            }
        })
        .collect();
    Instance::new(m, jobs, tag(config))
}

/// Flexible flow shop: operation `s` of every job is eligible on exactly the
/// machines of station `s`; durations in [2, 9].
pub fn generate_ffsp(config: &GeneratorConfig) -> Result<Instance> {
    config.validate()?;
    if config.variant != Variant::Ffsp {
        return Err(Error::Config(format!("generate_ffsp called with {:?}", config.variant)));
    }
    let stages = config.stages.unwrap_or(0);
    let per_stage = config.machines_per_stage.unwrap_or(0);
    let mut rng = rng_for(config);
    let jobs = (0..config.num_jobs)
        .map(|_| Job {
            operations: (0..stages)
                .map(|s| {
                    OperationSpec::new(
                        (s * per_stage..(s + 1) * per_stage)
                            .map(|machine| Alternative {
                                machine,
                                duration: rng.gen_range(2..=9),
                            })
                            .collect(),
                    )
                })
                .collect(),
        })
        .collect();
    Instance::new(config.num_machines, jobs, tag(config))
}
