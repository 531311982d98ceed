//! Exhaustive reference solver, written without the environment so it can
//! check it.

use super::Action;
use crate::error::{Error, Result};
use crate::instance::{Instance, Time};

pub const ORACLE_MAX_OPS: usize = 9;

/// Makespan of a complete action sequence, evaluated from scratch with
/// `start = max(job predecessor finish, machine free time)`.
pub fn evaluate_sequence(instance: &Instance, actions: &[Action]) -> Result<Time> {
    let mut next = vec![0usize; instance.num_jobs()];
    let mut job_free = vec![0 as Time; instance.num_jobs()];
    let mut machine_free = vec![0 as Time; instance.num_machines()];
    for a in actions {
        if a.op >= instance.num_operations() {
            return Err(Error::Infeasible(format!("unknown operation {}", a.op)));
        }
        let job = instance.job_of(a.op);
        if instance.index_in_job(a.op) != next[job] {
            return Err(Error::Infeasible(format!("operation {} out of job order", a.op)));
        }
        let d = instance
            .operation(a.op)
            .duration_on(a.machine)
            .ok_or_else(|| Error::Infeasible(format!("machine {} not eligible for {}", a.machine, a.op)))?;
        let finish = job_free[job].max(machine_free[a.machine]) + d;
        job_free[job] = finish;
        machine_free[a.machine] = finish;
        next[job] += 1;
    }
    if next.iter().enumerate().any(|(j, &k)| k != instance.job_len(j)) {
        return Err(Error::Infeasible("sequence does not schedule every operation".into()));
    }
    Ok(job_free.into_iter().max().unwrap_or(0))
}

struct Search<'a> {
    inst: &'a Instance,
    next: Vec<usize>,
    job_free: Vec<Time>,
    machine_free: Vec<Time>,
    // sum of minimum durations of each job's unscheduled suffix
    tail: Vec<Vec<Time>>,
    best: Time,
}

impl Search<'_> {
    fn bound(&self) -> Time {
        let mut b = self.machine_free.iter().copied().max().unwrap_or(0);
        for (j, &k) in self.next.iter().enumerate() {
            b = b.max(self.job_free[j] + self.tail[j][k]);
        }
        b
    }

    fn dfs(&mut self, remaining: usize) {
        if remaining == 0 {
            let ms = self.job_free.iter().copied().max().unwrap_or(0);
            self.best = self.best.min(ms);
            return;
        }
        if self.bound() >= self.best {
            return;
        }
        for j in 0..self.inst.num_jobs() {
            let k = self.next[j];
            if k == self.inst.job_len(j) {
                continue;
            }
            let op = &self.inst.jobs()[j].operations[k];
            for alt in &op.alternatives {
                let (jf, mf) = (self.job_free[j], self.machine_free[alt.machine]);
                let finish = jf.max(mf) + alt.duration;
                self.job_free[j] = finish;
                self.machine_free[alt.machine] = finish;
                self.next[j] += 1;
                self.dfs(remaining - 1);
                self.next[j] -= 1;
                self.job_free[j] = jf;
                self.machine_free[alt.machine] = mf;
            }
        }
    }
}

/// Optimal makespan by enumerating every operation order and machine
/// assignment (branches whose lower bound cannot beat the incumbent are cut).
pub fn brute_force_oracle(instance: &Instance) -> Result<Time> {
    let n = instance.num_operations();
    if n > ORACLE_MAX_OPS {
        return Err(Error::TooLarge {
            ops: n,
            limit: ORACLE_MAX_OPS,
        });
    }
    let tail = instance
        .jobs()
        .iter()
        .map(|job| {
            let mut t = vec![0; job.operations.len() + 1];
            for k in (0..job.operations.len()).rev() {
                t[k] = t[k + 1] + job.operations[k].min_duration();
            }
            t
        })
        .collect();
    let mut search = Search {
        inst: instance,
        next: vec![0; instance.num_jobs()],
        job_free: vec![0; instance.num_jobs()],
        machine_free: vec![0; instance.num_machines()],
        tail,
        best: Time::MAX,
    };
    search.dfs(n);
    Ok(search.best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::instance_from_lists;

    #[test]
    fn chain_on_one_machine() {
        let inst = instance_from_lists(1, &[&[&[(0, 3)], &[(0, 4)]]]).unwrap();
        assert_eq!(brute_force_oracle(&inst).unwrap(), 7);
    }

    #[test]
    fn two_jobs_share_a_machine() {
        let inst = instance_from_lists(1, &[&[&[(0, 5)]], &[&[(0, 5)]]]).unwrap();
        assert_eq!(brute_force_oracle(&inst).unwrap(), 10);
    }

    #[test]
    fn two_by_two_by_two() {
        // one particular order; the optimum can only be better
        let inst = instance_from_lists(
            2,
            &[&[&[(0, 3), (1, 2)], &[(0, 2), (1, 4)]], &[&[(0, 3), (1, 2)], &[(0, 2), (1, 2)]]],
        )
        .unwrap();
        let a = evaluate_sequence(
            &inst,
            &[Action::new(0, 1), Action::new(1, 0), Action::new(2, 1), Action::new(3, 0)],
        )
        .unwrap();
        assert_eq!(a, 6);
        assert!(brute_force_oracle(&inst).unwrap() <= a);
    }

    #[test]
    fn size_limit() {
        let jobs: Vec<&[&[(usize, Time)]]> = vec![&[&[(0, 1)]]; 10];
        let inst = instance_from_lists(1, &jobs).unwrap();
        assert!(matches!(brute_force_oracle(&inst), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn sequence_errors() {
        let inst = instance_from_lists(1, &[&[&[(0, 3)], &[(0, 4)]]]).unwrap();
        assert!(evaluate_sequence(&inst, &[Action::new(1, 0), Action::new(0, 0)]).is_err());
        assert!(evaluate_sequence(&inst, &[Action::new(0, 0)]).is_err());
    }
}
