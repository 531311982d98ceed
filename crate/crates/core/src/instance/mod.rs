//! Problem definitions for flexible job-shop scheduling.
//!
//! An [`Instance`] is a list of jobs; each job is an ordered chain of
//! operations and each operation lists the machines it may run on together
//! with the (integer) processing time on that machine. Operations are also
//! addressed by a flat, job-major id (`0..num_operations()`), which is what
//! the environment and the policy work with.

mod generate;
mod lower_bound;
mod parse;

pub use generate::{generate, generate_ffsp, generate_jssp, generate_sd, GeneratorConfig, Variant};
pub use lower_bound::{lower_bound_static, StaticLowerBound};
pub use parse::{parse_dmu, parse_fjs, parse_taillard_jssp, write_fjs, write_taillard_jssp};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer time units; durations, start and finish times all use it.
pub type Time = u64;

/// Flat, job-major operation index.
pub type OpId = usize;

/// Version tag written into the JSON instance format.
pub const INSTANCE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alternative {
    pub machine: usize,
    pub duration: Time,
}

/// One operation: the machines it may be processed on and the matching durations.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OperationSpec {
    pub alternatives: Vec<Alternative>,
}

impl OperationSpec {
    pub fn new(alternatives: Vec<Alternative>) -> Self {
        Self { alternatives }
    }

    pub fn min_duration(&self) -> Time {
        self.alternatives.iter().map(|a| a.duration).min().unwrap_or(0)
    }

    pub fn max_duration(&self) -> Time {
        self.alternatives.iter().map(|a| a.duration).max().unwrap_or(0)
    }

    pub fn mean_duration(&self) -> f64 {
        let total: Time = self.alternatives.iter().map(|a| a.duration).sum();
        total as f64 / self.alternatives.len() as f64
    }

    pub fn duration_on(&self, machine: usize) -> Option<Time> {
        self.alternatives
            .iter()
            .find(|a| a.machine == machine)
            .map(|a| a.duration)
    }
}

/// An ordered chain of operations; position in the list is the intra-job index.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Job {
    pub operations: Vec<OperationSpec>,
}

/// Immutable problem definition.
///
/// Constructed through [`Instance::new`], which checks every structural
/// invariant, so any `Instance` value in the program is valid.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "InstanceRepr", into = "InstanceRepr")]
pub struct Instance {
    num_jobs: usize,
    num_machines: usize,
    jobs: Vec<Job>,
    meta: String,
    // derived, job-major
    job_offset: Vec<OpId>,
    op_job: Vec<usize>,
    op_index: Vec<usize>,
}

impl PartialEq for Instance {
    fn eq(&self, other: &Self) -> bool {
        self.num_jobs == other.num_jobs
            && self.num_machines == other.num_machines
            && self.jobs == other.jobs
            && self.meta == other.meta
    }
}

impl Eq for Instance {}

impl Instance {
    pub fn new(num_machines: usize, jobs: Vec<Job>, meta: impl Into<String>) -> Result<Self> {
        if jobs.is_empty() {
            return Err(Error::InvalidInstance("instance has no jobs".into()));
        }
        if num_machines == 0 {
            return Err(Error::InvalidInstance("instance has no machines".into()));
        }
        for (j, job) in jobs.iter().enumerate() {
            if job.operations.is_empty() {
                return Err(Error::InvalidInstance(format!("job {j} has no operations")));
            }
            for (k, op) in job.operations.iter().enumerate() {
                if op.alternatives.is_empty() {
                    return Err(Error::InvalidInstance(format!(
                        "operation {k} of job {j} has no eligible machine"
                    )));
                }
                for (a_idx, alt) in op.alternatives.iter().enumerate() {
                    if alt.machine >= num_machines {
                        return Err(Error::InvalidInstance(format!(
                            "operation {k} of job {j}: machine {} out of range (num_machines = {num_machines})",
                            alt.machine
                        )));
                    }
                    if alt.duration < 1 {
                        return Err(Error::InvalidInstance(format!(
                            "operation {k} of job {j}: duration must be >= 1"
                        )));
                    }
                    if op.alternatives[..a_idx].iter().any(|b| b.machine == alt.machine) {
                        return Err(Error::InvalidInstance(format!(
                            "operation {k} of job {j}: machine {} listed twice",
                            alt.machine
                        )));
                    }
                }
            }
        }
        let mut job_offset = Vec::with_capacity(jobs.len() + 1);
        let mut op_job = Vec::new();
        let mut op_index = Vec::new();
        let mut next = 0;
        for (j, job) in jobs.iter().enumerate() {
            job_offset.push(next);
            for k in 0..job.operations.len() {
                op_job.push(j);
                op_index.push(k);
            }
            next += job.operations.len();
        }
        job_offset.push(next);
        Ok(Self {
            num_jobs: jobs.len(),
            num_machines,
            jobs,
            meta: meta.into(),
            job_offset,
            op_job,
            op_index,
        })
    }

    pub fn num_jobs(&self) -> usize {
        self.num_jobs
    }

    pub fn num_machines(&self) -> usize {
        self.num_machines
    }

    pub fn num_operations(&self) -> usize {
        self.op_job.len()
    }

    pub fn jobs(&self) -> &[Job] {
        &self.jobs
    }

    pub fn meta(&self) -> &str {
        &self.meta
    }

    pub fn with_meta(mut self, meta: impl Into<String>) -> Self {
        self.meta = meta.into();
        self
    }

    pub fn op_id(&self, job: usize, index: usize) -> OpId {
        self.job_offset[job] + index
    }

    pub fn job_of(&self, op: OpId) -> usize {
        self.op_job[op]
    }

    pub fn index_in_job(&self, op: OpId) -> usize {
        self.op_index[op]
    }

    pub fn job_len(&self, job: usize) -> usize {
        self.jobs[job].operations.len()
    }

    /// Flat op ids of `job`, in precedence order.
    pub fn job_ops(&self, job: usize) -> std::ops::Range<OpId> {
        self.job_offset[job]..self.job_offset[job + 1]
    }

    pub fn operation(&self, op: OpId) -> &OperationSpec {
        &self.jobs[self.op_job[op]].operations[self.op_index[op]]
    }

    pub fn operations(&self) -> impl Iterator<Item = &OperationSpec> {
        self.jobs.iter().flat_map(|j| j.operations.iter())
    }

    pub fn max_duration(&self) -> Time {
        self.operations().map(OperationSpec::max_duration).max().unwrap_or(1)
    }

    /// Average number of eligible machines per operation.
    pub fn flexibility(&self) -> f64 {
        let alts: usize = self.operations().map(|o| o.alternatives.len()).sum();
        alts as f64 / self.num_operations() as f64
    }

    /// Canonical JSON encoding (versioned).
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceRepr {
    format_version: u32,
    num_jobs: usize,
    num_machines: usize,
    jobs: Vec<Job>,
    #[serde(default)]
    meta: String,
}

impl TryFrom<InstanceRepr> for Instance {
    type Error = Error;

    fn try_from(repr: InstanceRepr) -> Result<Self> {
        if repr.format_version != INSTANCE_FORMAT_VERSION {
            return Err(Error::InvalidInstance(format!(
                "unsupported instance format version {}",
                repr.format_version
            )));
        }
        if repr.num_jobs != repr.jobs.len() {
            return Err(Error::InvalidInstance(format!(
                "num_jobs = {} but {} jobs listed",
                repr.num_jobs,
                repr.jobs.len()
            )));
        }
        Instance::new(repr.num_machines, repr.jobs, repr.meta)
    }
}

impl From<Instance> for InstanceRepr {
    fn from(inst: Instance) -> Self {
        InstanceRepr {
            format_version: INSTANCE_FORMAT_VERSION,
            num_jobs: inst.num_jobs,
            num_machines: inst.num_machines,
            jobs: inst.jobs,
            meta: inst.meta,
        }
    }
}

/// Shorthand used by tests and examples: each job is a list of operations,
/// each operation a list of `(machine, duration)` pairs.
pub fn instance_from_lists(num_machines: usize, jobs: &[&[&[(usize, Time)]]]) -> Result<Instance> {
    let jobs = jobs
        .iter()
        .map(|ops| Job {
            operations: ops
                .iter()
                .map(|alts| {
                    OperationSpec::new(
                        alts.iter()
                            .map(|&(machine, duration)| Alternative { machine, duration })
                            .collect(),
                    )
                })
                .collect(),
        })
        .collect();
    Instance::new(num_machines, jobs, "")
}
