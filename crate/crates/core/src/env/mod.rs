//! The scheduling MDP.
//!
//! A [`SchedulingState`] holds exactly what is needed to continue a partial
//! schedule: machine available times, each job's frontier and ready time, the
//! remaining precedence chains and the remaining eligibility edges. Every step
//! schedules one `(operation, machine)` pair at
//! `max(job ready time, machine available time)` and appends it to the machine.

mod features;
mod hash;
mod oracle;
mod schedule;

pub use features::{extract_features, extract_features_with_scale, Edge, StateFeatures};
pub use oracle::{brute_force_oracle, evaluate_sequence, ORACLE_MAX_OPS};
pub use schedule::{Schedule, ScheduledOp};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{lower_bound_static, Instance, OpId, Time};

/// How the per-step reward is derived from the state before and after an action.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Negative increase of the contention-free lower-bound makespan.
    #[default]
    LowerBound,
    /// Negative increase of the makespan of the scheduled part.
    DeltaMakespan,
    /// Like `LowerBound`, with mean instead of minimum durations for unscheduled operations.
    EstimatedMean,
}

impl std::str::FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower_bound" | "lb" => Ok(RewardMode::LowerBound),
            "delta_makespan" | "delta" => Ok(RewardMode::DeltaMakespan),
            "estimated_mean" | "mean" => Ok(RewardMode::EstimatedMean),
            other => Err(Error::Config(format!("unknown reward mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action {
    pub op: OpId,
    pub machine: usize,
}

impl Action {
    pub fn new(op: OpId, machine: usize) -> Self {
        Self { op, machine }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    pub machine: usize,
    pub start: Time,
    pub finish: Time,
}

#[derive(Clone, Debug)]
pub struct SchedulingState {
    instance: Arc<Instance>,
    reward_mode: RewardMode,
    step: usize,
    scheduled: Vec<Option<Assignment>>,
    // index of the next unscheduled operation per job (== job length when done)
    frontier: Vec<usize>,
    op_avail: Vec<Time>,
    mach_avail: Vec<Time>,
    lb_table: Vec<Time>,
}

/// Initial state of `instance`.
pub fn reset(instance: Arc<Instance>, reward_mode: RewardMode) -> SchedulingState {
    SchedulingState::new(instance, reward_mode)
}

impl SchedulingState {
    pub fn new(instance: Arc<Instance>, reward_mode: RewardMode) -> Self {
        let n = instance.num_operations();
        let lb = lower_bound_static(&instance);
        let op_avail = (0..n)
            .map(|op| lb.per_op[op] - instance.operation(op).min_duration())
            .collect();
        Self {
            reward_mode,
            step: 0,
            scheduled: vec![None; n],
            frontier: vec![0; instance.num_jobs()],
            op_avail,
            mach_avail: vec![0; instance.num_machines()],
            lb_table: lb.per_op,
            instance,
        }
    }

    pub fn instance(&self) -> &Arc<Instance> {
        &self.instance
    }

    pub fn reward_mode(&self) -> RewardMode {
        self.reward_mode
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn is_terminal(&self) -> bool {
        self.step == self.instance.num_operations()
    }

    pub fn remaining(&self) -> usize {
        self.instance.num_operations() - self.step
    }

    pub fn assignment(&self, op: OpId) -> Option<Assignment> {
        self.scheduled[op]
    }

    pub fn is_scheduled(&self, op: OpId) -> bool {
        self.scheduled[op].is_some()
    }

    /// Earliest start of each operation: the predecessor's finish if it is
    /// scheduled, otherwise its contention-free lower-bound finish.
    pub fn op_avail(&self) -> &[Time] {
        &self.op_avail
    }

    pub fn mach_avail(&self) -> &[Time] {
        &self.mach_avail
    }

    /// Per-operation finish-time lower bound (actual finish for scheduled operations).
    pub fn lb_table(&self) -> &[Time] {
        &self.lb_table
    }

    pub fn lb_makespan(&self) -> Time {
        self.lb_table.iter().copied().max().unwrap_or(0)
    }

    /// Index of the next unscheduled operation of `job`.
    pub fn frontier(&self, job: usize) -> usize {
        self.frontier[job]
    }

    /// Finish time of the last scheduled operation of `job` (0 if none).
    pub fn job_ready(&self, job: usize) -> Time {
        match self.frontier[job] {
            0 => 0,
            k => self.scheduled[self.instance.op_id(job, k - 1)]
                .map(|a| a.finish)
                .unwrap_or(0),
        }
    }

    /// Operation whose predecessors are all scheduled, if the job is not finished.
    pub fn ready_op(&self, job: usize) -> Option<OpId> {
        (self.frontier[job] < self.instance.job_len(job)).then(|| self.instance.op_id(job, self.frontier[job]))
    }

    pub fn unscheduled_ops(&self) -> impl Iterator<Item = OpId> + '_ {
        (0..self.instance.num_jobs()).flat_map(move |j| {
            let range = self.instance.job_ops(j);
            (range.start + self.frontier[j])..range.end
        })
    }

    /// Remaining intra-job successors of `op` (the backward-looking hop edges).
    /// Empty once `op` is scheduled.
    pub fn o2o_successors(&self, op: OpId) -> std::ops::Range<OpId> {
        if self.is_scheduled(op) {
            return op..op;
        }
        (op + 1)..self.instance.job_ops(self.instance.job_of(op)).end
    }

    /// Eligibility edge between an unscheduled operation and a machine.
    pub fn o2m_feasible(&self, op: OpId, machine: usize) -> bool {
        !self.is_scheduled(op) && self.instance.operation(op).duration_on(machine).is_some()
    }

    pub fn is_feasible(&self, action: Action) -> bool {
        if action.op >= self.instance.num_operations() || self.is_scheduled(action.op) {
            return false;
        }
        let job = self.instance.job_of(action.op);
        self.frontier[job] == self.instance.index_in_job(action.op)
            && self.instance.operation(action.op).duration_on(action.machine).is_some()
    }

    /// Every `(ready operation, eligible machine)` pair, ordered by job and
    /// then by the operation's alternative list. Empty iff terminal.
    pub fn feasible_actions(&self) -> Vec<Action> {
        let mut out = Vec::new();
        for job in 0..self.instance.num_jobs() {
            if let Some(op) = self.ready_op(job) {
                out.extend(
                    self.instance
                        .operation(op)
                        .alternatives
                        .iter()
                        .map(|a| Action::new(op, a.machine)),
                );
            }
        }
        out
    }

    /// Makespan estimate that the active reward mode differences.
    pub fn estimated_makespan(&self, mode: RewardMode) -> f64 {
        match mode {
            RewardMode::LowerBound => self.lb_makespan() as f64,
            RewardMode::DeltaMakespan => self.partial_makespan() as f64,
            RewardMode::EstimatedMean => {
                let mut best = 0.0f64;
                for job in 0..self.instance.num_jobs() {
                    let mut t = self.job_ready(job) as f64;
                    for op in self.instance.job_ops(job).skip(self.frontier[job]) {
                        t += self.instance.operation(op).mean_duration();
                    }
                    best = best.max(t);
                }
                best
            }
        }
    }

    /// Largest finish time among scheduled operations (0 at the start).
    pub fn partial_makespan(&self) -> Time {
        self.mach_avail.iter().copied().max().unwrap_or(0)
    }

    /// Applies `action` in place and returns the reward.
    pub fn step(&mut self, action: Action) -> Result<f64> {
        if self.is_terminal() {
            return Err(Error::Terminal);
        }
        if !self.is_feasible(action) {
            return Err(Error::Infeasible(format!(
                "operation {} on machine {} is not schedulable at step {}",
                action.op, action.machine, self.step
            )));
        }
        let before = self.estimated_makespan(self.reward_mode);
        let op = action.op;
        let job = self.instance.job_of(op);
        let duration = self
            .instance
            .operation(op)
            .duration_on(action.machine)
            .expect("feasibility checked");
        let start = self.op_avail[op].max(self.mach_avail[action.machine]);
        let finish = start + duration;
        self.scheduled[op] = Some(Assignment {
            machine: action.machine,
            start,
            finish,
        });
        self.mach_avail[action.machine] = finish;
        self.frontier[job] += 1;
        self.lb_table[op] = finish;
        let mut prev_finish = finish;
        for succ in (op + 1)..self.instance.job_ops(job).end {
            self.op_avail[succ] = prev_finish;
            prev_finish += self.instance.operation(succ).min_duration();
            self.lb_table[succ] = prev_finish;
        }
        self.step += 1;
        let after = self.estimated_makespan(self.reward_mode);
        Ok(-(after - before))
    }

    /// Functional form of [`step`](Self::step).
    pub fn stepped(&self, action: Action) -> Result<(Self, f64)> {
        let mut next = self.clone();
        let r = next.step(action)?;
        Ok((next, r))
    }

    pub fn makespan(&self) -> Result<Time> {
        if !self.is_terminal() {
            return Err(Error::NotTerminal {
                remaining: self.remaining(),
            });
        }
        Ok(self.partial_makespan())
    }

    /// Scheduled operations in the order they were scheduled.
    pub fn schedule(&self) -> Schedule {
        Schedule::from_state(self)
    }

    /// Translates every absolute time in the state by `offset`.
    pub fn shifted(&self, offset: Time) -> Self {
        let mut s = self.clone();
        s.op_avail.iter_mut().for_each(|t| *t += offset);
        s.mach_avail.iter_mut().for_each(|t| *t += offset);
        s.lb_table.iter_mut().for_each(|t| *t += offset);
        for a in s.scheduled.iter_mut().flatten() {
            a.start += offset;
            a.finish += offset;
        }
        s
    }

    pub(crate) fn scheduled_raw(&self) -> &[Option<Assignment>] {
        &self.scheduled
    }
}
