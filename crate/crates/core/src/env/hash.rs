use sha2::{Digest, Sha256};

use super::SchedulingState;

impl SchedulingState {
    /// Digest of the state's defining tuple: machine available times, each
    /// job's frontier and ready time, and the remaining operation chains with
    /// their eligible machines and durations.
    ///
    /// Times are written relative to the earliest machine available time,
    /// preceded by that origin, so equal digests mean equal absolute times and
    /// therefore identical remaining subproblems and makespans.
    pub fn canonical_hash(&self) -> String {
        let inst = self.instance();
        let origin = self.mach_avail().iter().copied().min().unwrap_or(0);
        let mut h = Sha256::new();
        let mut put = |x: u64| h.update(x.to_le_bytes());
        put(inst.num_machines() as u64);
        put(origin);
        for &t in self.mach_avail() {
            put(t - origin);
        }
        put(inst.num_jobs() as u64);
        for job in 0..inst.num_jobs() {
            let frontier = self.frontier(job);
            put(frontier as u64);
            // ready time may precede the origin; encode as signed offset
            put((self.job_ready(job) as i64 - origin as i64) as u64);
            let remaining = inst.job_ops(job).skip(frontier);
            put(remaining.len() as u64);
            for op in remaining {
                let spec = inst.operation(op);
                put(spec.alternatives.len() as u64);
                for alt in &spec.alternatives {
                    put(alt.machine as u64);
                    put(alt.duration);
                }
            }
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use crate::env::{Action, RewardMode, SchedulingState};
    use crate::instance::instance_from_lists;

    #[test]
    fn independent_jobs_in_either_order_give_equal_digests() {
        let inst = Arc::new(
            instance_from_lists(2, &[&[&[(0, 3)], &[(1, 2)]], &[&[(1, 4)], &[(0, 1)]]]).unwrap(),
        );
        let s0 = SchedulingState::new(inst, RewardMode::LowerBound);
        let a = s0
            .stepped(Action::new(0, 0))
            .and_then(|(s, _)| s.stepped(Action::new(2, 1)))
            .unwrap()
            .0;
        let b = s0
            .stepped(Action::new(2, 1))
            .and_then(|(s, _)| s.stepped(Action::new(0, 0)))
            .unwrap()
            .0;
        assert_eq!(a.canonical_hash(), b.canonical_hash());
        assert_eq!(a.canonical_hash(), a.clone().canonical_hash());
        assert_ne!(a.canonical_hash(), s0.canonical_hash());
    }

    #[test]
    fn machine_times_change_the_digest() {
        let inst = Arc::new(instance_from_lists(2, &[&[&[(0, 3), (1, 5)]], &[&[(0, 2)]]]).unwrap());
        let s0 = SchedulingState::new(inst, RewardMode::LowerBound);
        let a = s0.stepped(Action::new(0, 0)).unwrap().0;
        let b = s0.stepped(Action::new(0, 1)).unwrap().0;
        assert_ne!(a.canonical_hash(), b.canonical_hash());
        assert_ne!(a.canonical_hash(), a.shifted(1).canonical_hash());
    }
}
