//! Priority dispatching rules driven through the same environment as the
//! learned policy.

use std::cmp::Ordering;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, RewardMode, Schedule, SchedulingState};
use crate::error::{Error, Result};
use crate::instance::{Instance, Time};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Fifo,
    Spt,
    Mopnr,
    Mwkr,
    #[serde(rename = "random")]
    RandomUniform,
}

impl Rule {
    /// The four deterministic rules, in reporting order.
    pub const CLASSIC: [Rule; 4] = [Rule::Fifo, Rule::Spt, Rule::Mopnr, Rule::Mwkr];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Fifo => "fifo",
            Rule::Spt => "spt",
            Rule::Mopnr => "mopnr",
            Rule::Mwkr => "mwkr",
            Rule::RandomUniform => "random",
        }
    }
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fifo" => Ok(Rule::Fifo),
            "spt" => Ok(Rule::Spt),
            "mopnr" => Ok(Rule::Mopnr),
            "mwkr" => Ok(Rule::Mwkr),
            "random" | "random_uniform" | "randomuniform" => Ok(Rule::RandomUniform),
            other => Err(Error::Config(format!("unknown dispatching rule `{other}`"))),
        }
    }
}

/// Remaining work of a job: sum of mean eligible durations over its
/// unscheduled operations, the ready one included.
pub fn remaining_work(state: &SchedulingState, job: usize) -> f64 {
    let inst = state.instance();
    inst.job_ops(job)
        .skip(state.frontier(job))
        .map(|op| inst.operation(op).mean_duration())
        .sum()
}

struct Candidate {
    action: Action,
    job: usize,
    index: usize,
    duration: Time,
    machine_free: Time,
}

fn candidates(state: &SchedulingState) -> Vec<Candidate> {
    let inst = state.instance();
    state
        .feasible_actions()
        .into_iter()
        .map(|a| {
            let job = inst.job_of(a.op);
            Candidate {
                action: a,
                job,
                index: inst.index_in_job(a.op),
                duration: inst.operation(a.op).duration_on(a.machine).expect("feasible pair"),
                machine_free: state.mach_avail()[a.machine],
            }
        })
        .collect()
}

/// One action chosen by `rule`. Residual ties are broken by fixed index
/// orders so every deterministic rule is a pure function of the state.
pub fn pdr_select<R: Rng + ?Sized>(state: &SchedulingState, rule: Rule, rng: &mut R) -> Result<Action> {
    let cands = candidates(state);
    if cands.is_empty() {
        return Err(Error::Terminal);
    }
    if rule == Rule::RandomUniform {
        return Ok(cands[rng.gen_range(0..cands.len())].action);
    }
    let inst = state.instance();
    let cmp: Box<dyn Fn(&Candidate, &Candidate) -> Ordering> = match rule {
        Rule::Fifo => Box::new(|a, b| {
            let (ta, tb) = (state.op_avail()[a.action.op], state.op_avail()[b.action.op]);
            (ta, a.job, a.machine_free, a.action.machine).cmp(&(tb, b.job, b.machine_free, b.action.machine))
        }),
        Rule::Spt => Box::new(|a, b| {
            (a.duration, a.job, a.index, a.action.machine).cmp(&(b.duration, b.job, b.index, b.action.machine))
        }),
        Rule::Mopnr => Box::new(|a, b| {
            let ra = inst.job_len(a.job) - state.frontier(a.job);
            let rb = inst.job_len(b.job) - state.frontier(b.job);
            rb.cmp(&ra)
                .then((a.machine_free, a.job, a.action.machine).cmp(&(b.machine_free, b.job, b.action.machine)))
        }),
        Rule::Mwkr => Box::new(|a, b| {
            let (wa, wb) = (remaining_work(state, a.job), remaining_work(state, b.job));
            wb.total_cmp(&wa)
                .then((a.machine_free, a.job, a.action.machine).cmp(&(b.machine_free, b.job, b.action.machine)))
        }),
        Rule::RandomUniform => unreachable!(),
    };
    Ok(cands.iter().min_by(|a, b| cmp(a, b)).expect("non-empty").action)
}

/// Runs `rule` from the initial state to a complete schedule.
pub fn pdr_rollout<R: Rng + ?Sized>(instance: &Arc<Instance>, rule: Rule, rng: &mut R) -> Result<(Time, Schedule)> {
    let mut state = SchedulingState::new(instance.clone(), RewardMode::LowerBound);
    while !state.is_terminal() {
        let a = pdr_select(&state, rule, rng)?;
        state.step(a)?;
    }
    Ok((state.makespan()?, state.schedule()))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::env::brute_force_oracle;
    use crate::instance::{instance_from_lists, lower_bound_static};

    fn state(m: usize, jobs: &[&[&[(usize, Time)]]]) -> SchedulingState {
        SchedulingState::new(Arc::new(instance_from_lists(m, jobs).unwrap()), RewardMode::LowerBound)
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn spt_picks_shortest_pair() {
        let s = state(2, &[&[&[(0, 7), (1, 3)]], &[&[(0, 5)]]]);
        assert_eq!(pdr_select(&s, Rule::Spt, &mut rng()).unwrap(), Action::new(0, 1));
    }

    #[test]
    fn mopnr_prefers_longer_job() {
        let s = state(2, &[&[&[(0, 1)]], &[&[(1, 9)], &[(0, 1)], &[(1, 1)]]]);
        let a = pdr_select(&s, Rule::Mopnr, &mut rng()).unwrap();
        assert_eq!(s.instance().job_of(a.op), 1);
    }

    #[test]
    fn mwkr_prefers_more_work_on_earliest_machine() {
        // job A: means 5 + 7 = 12, job B: 9
        let mut s = state(3, &[&[&[(0, 4), (1, 6)], &[(2, 7)]], &[&[(0, 9)]], &[&[(1, 1)]]]);
        s.step(Action::new(3, 1)).unwrap();
        assert_eq!(remaining_work(&s, 0), 12.0);
        assert_eq!(remaining_work(&s, 1), 9.0);
        assert_eq!(pdr_select(&s, Rule::Mwkr, &mut rng()).unwrap(), Action::new(0, 0));
    }

    #[test]
    fn fifo_prefers_earliest_available_operation() {
        let mut s = state(2, &[&[&[(0, 2)], &[(1, 3)]], &[&[(0, 5)], &[(1, 1)]]]);
        s.step(Action::new(0, 0)).unwrap();
        // op1 becomes available at 2, job 1's first operation has been waiting since 0
        assert_eq!(pdr_select(&s, Rule::Fifo, &mut rng()).unwrap(), Action::new(2, 0));
    }

    #[test]
    fn terminal_state_errors() {
        let mut s = state(1, &[&[&[(0, 2)]]]);
        s.step(Action::new(0, 0)).unwrap();
        assert!(matches!(pdr_select(&s, Rule::Spt, &mut rng()), Err(Error::Terminal)));
    }

    #[test]
    fn single_job_rollout_matches_oracle() {
        let inst = Arc::new(instance_from_lists(2, &[&[&[(0, 3), (1, 2)], &[(0, 4)], &[(1, 1), (0, 5)]]]).unwrap());
        for rule in Rule::CLASSIC {
            let (ms, sched) = pdr_rollout(&inst, rule, &mut rng()).unwrap();
            assert_eq!(sched.validate(&inst).unwrap(), ms);
            if rule == Rule::Spt {
                assert_eq!(ms, brute_force_oracle(&inst).unwrap());
            }
            assert!(ms >= lower_bound_static(&inst).makespan);
        }
    }

    #[test]
    fn random_rule_is_reproducible() {
        let inst = Arc::new(
            instance_from_lists(2, &[&[&[(0, 3), (1, 2)], &[(0, 4)]], &[&[(1, 6), (0, 5)], &[(0, 1), (1, 2)]]]).unwrap(),
        );
        let a = pdr_rollout(&inst, Rule::RandomUniform, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = pdr_rollout(&inst, Rule::RandomUniform, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn names_round_trip() {
        for r in [Rule::Fifo, Rule::Spt, Rule::Mopnr, Rule::Mwkr, Rule::RandomUniform] {
            assert_eq!(r.name().parse::<Rule>().unwrap(), r);
        }
        assert!("lifo".parse::<Rule>().is_err());
    }
}
