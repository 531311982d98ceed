use super::{Instance, Time};

/// Contention-free lower bound on every operation's finish time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StaticLowerBound {
    /// Per operation (flat id): sum of minimum durations along the job prefix.
    pub per_op: Vec<Time>,
    /// Maximum over all operations; a lower bound on any feasible makespan.
    pub makespan: Time,
}

pub fn lower_bound_static(instance: &Instance) -> StaticLowerBound {
    let mut per_op = Vec::with_capacity(instance.num_operations());
    for job in instance.jobs() {
        let mut acc = 0;
        for op in &job.operations {
            acc += op.min_duration();
            per_op.push(acc);
        }
    }
    let makespan = per_op.iter().copied().max().unwrap_or(0);
    StaticLowerBound { per_op, makespan }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::instance_from_lists;

    #[test]
    fn single_chain() {
        let inst = instance_from_lists(2, &[&[&[(0, 3), (1, 7)], &[(0, 5)]]]).unwrap();
        let lb = lower_bound_static(&inst);
        assert_eq!(lb.per_op, vec![3, 8]);
        assert_eq!(lb.makespan, 8);
    }

    #[test]
    fn max_over_jobs() {
        let inst = instance_from_lists(1, &[&[&[(0, 3)]], &[&[(0, 5)]]]).unwrap();
        assert_eq!(lower_bound_static(&inst).makespan, 5);
    }
}
