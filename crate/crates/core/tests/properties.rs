mod common;

use std::sync::Arc;

use common::{random_episode, random_instance, rng};
use fjsp_rl::env::{brute_force_oracle, evaluate_sequence, Action, RewardMode, SchedulingState};
use fjsp_rl::instance::{
    generate, lower_bound_static, parse_fjs, parse_taillard_jssp, write_fjs, write_taillard_jssp, GeneratorConfig,
    Instance, Variant,
};
use fjsp_rl::rules::{pdr_select, Rule};
use proptest::prelude::*;

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::Sd1), Just(Variant::Sd2), Just(Variant::Jssp), Just(Variant::Ffsp)]
}

fn generated(v: Variant, jobs: usize, machines: usize, seed: u64) -> Instance {
    let cfg = match v {
        Variant::Ffsp => GeneratorConfig::ffsp(jobs, 1 + machines % 3, 1 + machines / 3, seed),
        _ => GeneratorConfig::new(v, jobs, machines, seed),
    };
    generate(&cfg).unwrap()
}

/// Constraint check written against the instance only.
fn naive_feasible(state: &SchedulingState, a: Action) -> bool {
    let inst = state.instance();
    if a.op >= inst.num_operations() || state.is_scheduled(a.op) {
        return false;
    }
    let job = inst.job_of(a.op);
    let k = inst.index_in_job(a.op);
    let preds_done = (0..k).all(|i| state.is_scheduled(inst.op_id(job, i)));
    preds_done && inst.operation(a.op).duration_on(a.machine).is_some()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(250))]

    #[test]
    fn generators_are_deterministic_and_valid(v in variant(), jobs in 1usize..12, machines in 1usize..8, seed in any::<u64>()) {
        let a = generated(v, jobs, machines, seed);
        let b = generated(v, jobs, machines, seed);
        prop_assert_eq!(&a, &b);
        // rebuilding through the checked constructor accepts it
        prop_assert!(Instance::new(a.num_machines(), a.jobs().to_vec(), a.meta()).is_ok());
        let back = parse_fjs(&write_fjs(&a)).unwrap();
        prop_assert_eq!(back.jobs(), a.jobs());
        prop_assert_eq!(Instance::from_json(&a.to_json().unwrap()).unwrap(), a.clone());
        if v == Variant::Jssp {
            let t = parse_taillard_jssp(&write_taillard_jssp(&a).unwrap()).unwrap();
            prop_assert_eq!(t.jobs(), a.jobs());
        }
        if v == Variant::Ffsp {
            // every job shares the same eligible machine sets stage by stage
            let first: Vec<Vec<usize>> = a.jobs()[0].operations.iter()
                .map(|o| o.alternatives.iter().map(|x| x.machine).collect()).collect();
            for j in a.jobs() {
                let sets: Vec<Vec<usize>> = j.operations.iter()
                    .map(|o| o.alternatives.iter().map(|x| x.machine).collect()).collect();
                prop_assert_eq!(&sets, &first);
            }
        }
    }

    #[test]
    fn rollouts_respect_every_invariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = Arc::new(random_instance(&mut r, 5, 4, 14, 12));
        let mut s = SchedulingState::new(inst.clone(), RewardMode::LowerBound);
        let lb0 = s.lb_makespan();
        let mut lb_prev = lb0;
        let mut total = 0.0;
        let mut actions = Vec::new();
        while !s.is_terminal() {
            // feasible set equals the naive constraint check over all pairs
            for op in 0..inst.num_operations() {
                for m in 0..inst.num_machines() {
                    let a = Action::new(op, m);
                    prop_assert_eq!(s.is_feasible(a), naive_feasible(&s, a));
                }
            }
            let acts = s.feasible_actions();
            let a = acts[(r.next_u64() % acts.len() as u64) as usize];
            total += s.step(a).unwrap();
            actions.push(a);
            prop_assert!(s.lb_makespan() >= lb_prev);
            lb_prev = s.lb_makespan();
        }
        let ms = s.makespan().unwrap();
        prop_assert_eq!(s.lb_makespan(), ms);
        prop_assert_eq!(total, lb0 as f64 - ms as f64);
        prop_assert_eq!(s.schedule().validate(&inst).unwrap(), ms);
        prop_assert_eq!(evaluate_sequence(&inst, &actions).unwrap(), ms);
        prop_assert!(lower_bound_static(&inst).makespan <= ms);

        // replay reproduces every time exactly
        let mut replay = SchedulingState::new(inst.clone(), RewardMode::LowerBound);
        for &a in &actions {
            replay.step(a).unwrap();
        }
        prop_assert_eq!(replay.schedule(), s.schedule());
    }

    #[test]
    fn lower_bound_never_beats_the_optimum(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed), 3, 3, 7, 9);
        prop_assert!(lower_bound_static(&inst).makespan <= brute_force_oracle(&inst).unwrap());
    }

    #[test]
    fn rules_terminate_with_feasible_actions(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = Arc::new(random_instance(&mut r, 6, 4, 18, 15));
        for rule in [Rule::Fifo, Rule::Spt, Rule::Mopnr, Rule::Mwkr, Rule::RandomUniform] {
            let mut s = SchedulingState::new(inst.clone(), RewardMode::LowerBound);
            let mut steps = 0;
            while !s.is_terminal() {
                let a = pdr_select(&s, rule, &mut r).unwrap();
                prop_assert!(s.is_feasible(a));
                if rule == Rule::Spt {
                    let d = |a: Action| inst.operation(a.op).duration_on(a.machine).unwrap();
                    let best = s.feasible_actions().into_iter().map(d).min().unwrap();
                    prop_assert_eq!(d(a), best);
                }
                s.step(a).unwrap();
                steps += 1;
            }
            prop_assert_eq!(steps, inst.num_operations());
        }
    }

    #[test]
    fn all_reward_modes_are_finite(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = Arc::new(random_instance(&mut r, 4, 3, 10, 20));
        for mode in [RewardMode::LowerBound, RewardMode::DeltaMakespan, RewardMode::EstimatedMean] {
            let (_, rewards, s) = random_episode(&inst, mode, &mut r);
            prop_assert!(rewards.iter().all(|x| x.is_finite()));
            if mode == RewardMode::DeltaMakespan {
                let total: f64 = rewards.iter().sum();
                prop_assert_eq!(total, -(s.makespan().unwrap() as f64));
            }
        }
    }
}

use rand::RngCore;
