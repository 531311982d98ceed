use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SchedulingState;
use crate::error::{Error, Result};
use crate::instance::{Instance, OpId, Time};

/// One row of the CSV export: `op_id,job,idx,machine,start,finish`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledOp {
    pub op_id: OpId,
    pub job: usize,
    pub idx: usize,
    pub machine: usize,
    pub start: Time,
    pub finish: Time,
}

/// A (possibly partial) schedule; rows sorted by start time.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub num_machines: usize,
    pub ops: Vec<ScheduledOp>,
}

impl Schedule {
    pub(crate) fn from_state(state: &SchedulingState) -> Self {
        let inst = state.instance();
        let mut ops: Vec<ScheduledOp> = state
            .scheduled_raw()
            .iter()
            .enumerate()
            .filter_map(|(op, a)| {
                a.map(|a| ScheduledOp {
                    op_id: op,
                    job: inst.job_of(op),
                    idx: inst.index_in_job(op),
                    machine: a.machine,
                    start: a.start,
                    finish: a.finish,
                })
            })
            .collect();
        ops.sort_by_key(|o| (o.start, o.finish, o.op_id));
        Self {
            num_machines: inst.num_machines(),
            ops,
        }
    }

    pub fn makespan(&self) -> Time {
        self.ops.iter().map(|o| o.finish).max().unwrap_or(0)
    }

    /// Rows of one machine sorted by start time.
    pub fn machine_rows(&self, machine: usize) -> Vec<ScheduledOp> {
        let mut rows: Vec<_> = self.ops.iter().copied().filter(|o| o.machine == machine).collect();
        rows.sort_by_key(|o| (o.start, o.op_id));
        rows
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.ops {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn read_csv<R: Read>(reader: R, num_machines: usize) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let ops = r.deserialize().collect::<std::result::Result<Vec<ScheduledOp>, _>>()?;
        Ok(Self { num_machines, ops })
    }

    /// Checks a complete schedule against `instance` from scratch: every
    /// operation exactly once on an eligible machine with the right duration,
    /// job precedence respected, no two intervals overlapping on a machine.
    /// Returns the recomputed makespan.
    pub fn validate(&self, instance: &Instance) -> Result<Time> {
        let n = instance.num_operations();
        let mut seen: Vec<Option<ScheduledOp>> = vec![None; n];
        for row in &self.ops {
            if row.op_id >= n {
                return Err(Error::Invariant(format!("unknown operation {}", row.op_id)));
            }
            if seen[row.op_id].is_some() {
                return Err(Error::Invariant(format!("operation {} scheduled twice", row.op_id)));
            }
            if instance.job_of(row.op_id) != row.job || instance.index_in_job(row.op_id) != row.idx {
                return Err(Error::Invariant(format!("operation {} has wrong job/index", row.op_id)));
            }
            let Some(d) = instance.operation(row.op_id).duration_on(row.machine) else {
                return Err(Error::Invariant(format!(
                    "operation {} placed on ineligible machine {}",
                    row.op_id, row.machine
                )));
            };
            if row.finish != row.start + d {
                return Err(Error::Invariant(format!(
                    "operation {} lasts {} instead of {d}",
                    row.op_id,
                    row.finish as i64 - row.start as i64
                )));
            }
            seen[row.op_id] = Some(*row);
        }
        let rows: Vec<ScheduledOp> = seen
            .into_iter()
            .enumerate()
            .map(|(op, r)| r.ok_or_else(|| Error::Invariant(format!("operation {op} never scheduled"))))
            .collect::<Result<_>>()?;
        for job in 0..instance.num_jobs() {
            for op in instance.job_ops(job).skip(1) {
                if rows[op].start < rows[op - 1].finish {
                    return Err(Error::Invariant(format!(
                        "operation {op} starts at {} before its predecessor finishes at {}",
                        rows[op].start,
                        rows[op - 1].finish
                    )));
                }
            }
        }
        for m in 0..instance.num_machines() {
            let mut on_m: Vec<&ScheduledOp> = rows.iter().filter(|r| r.machine == m).collect();
            on_m.sort_by_key(|r| r.start);
            for w in on_m.windows(2) {
                if w[1].start < w[0].finish {
                    return Err(Error::Invariant(format!(
                        "operations {} and {} overlap on machine {m}",
                        w[0].op_id, w[1].op_id
                    )));
                }
            }
        }
        Ok(rows.iter().map(|r| r.finish).max().unwrap_or(0))
    }
}
