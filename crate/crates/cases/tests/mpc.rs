use masim_cases::mpc::{
    closed_loop, intruder_branch_input, solve_mpc, Branch, DubinsIntent, EncounterConfig, IntruderView,
    MpcError, MpcProblem, ScenarioTree,
};
use masim_core::env::InputBound;

fn far_problem_intent() -> DubinsIntent {
    let cfg = EncounterConfig::crossing();
    DubinsIntent::new([200.0, 200.0, 0.0], [260.0, 200.0, 0.0], cfg.mpc.intruder_speed, cfg.mpc.intruder_turn, cfg.mpc.te)
        .unwrap()
}

#[test]
fn crossing_encounter_keeps_separation_and_arrives() {
    let cfg = EncounterConfig::crossing();
    let started = std::time::Instant::now();
    let run = closed_loop(&cfg, 7).expect("closed loop");
    let r = &run.report;
    eprintln!(
        "steps {} min_sep {:?} own {:?} intr {:?} infeasible {:?} solve {:.1}ms/{:.1}ms elapsed {:?}",
        r.steps,
        r.min_separation,
        r.ownship_arrival_step,
        r.intruder_arrival_step,
        r.infeasible_steps,
        r.mean_solve_ms,
        r.max_solve_ms,
        started.elapsed()
    );
    assert_eq!(r.scenario_count, 9);
    assert!(r.min_separation.unwrap() >= cfg.mpc.rho, "min separation {:?}", r.min_separation);
    assert!(r.ownship_arrival_step.is_some());
    assert!(r.intruder_arrival_step.is_some());
    assert!(r.infeasible_steps.is_empty());
}

#[test]
fn far_intruder_matches_unconstrained_solution() {
    let cfg = EncounterConfig::crossing();
    let intent = far_problem_intent();
    let base = MpcProblem {
        config: &cfg.mpc,
        ownship: [0.0, 0.0, 0.3],
        target: [24.0, 0.0, 0.0],
        intruder: Some(IntruderView { state: intent.start, intent: &intent, arrival_tolerance: 0.5 }),
        time: 0.0,
        warm_start: None,
        seed: 11,
        enforce_separation: true,
    };
    let with = solve_mpc(&base).expect("feasible");
    let without = solve_mpc(&MpcProblem { enforce_separation: false, ..base.clone() }).unwrap();
    assert_eq!(with.turn, without.turn);
    assert_eq!(with.speed, without.speed);
    assert_eq!(with.cost, without.cost);
}

#[test]
fn at_target_inputs_are_near_zero() {
    let cfg = EncounterConfig::crossing();
    let p = MpcProblem {
        config: &cfg.mpc,
        ownship: [24.0, 0.0, 0.0],
        target: [24.0, 0.0, 0.0],
        intruder: None,
        time: 0.0,
        warm_start: None,
        seed: 3,
        enforce_separation: true,
    };
    let s = solve_mpc(&p).unwrap();
    assert!(s.speed.iter().all(|v| v.abs() < 1e-6), "{:?}", s.speed);
    assert!(s.cost < 1e-6);
}

#[test]
fn no_intruder_arrives_near_kinematic_bound() {
    let mut cfg = EncounterConfig::crossing();
    cfg.intruder = None;
    let run = closed_loop(&cfg, 1).unwrap();
    let bound = (24.0f64 / (cfg.mpc.ownship_speed.hi * cfg.mpc.te)).ceil() as u64;
    let arrival = run.report.ownship_arrival_step.expect("arrives");
    assert!(arrival <= bound + 1, "arrival {arrival} vs bound {bound}");
    assert!(run.report.min_separation.is_none());
}

#[test]
fn larger_rho_never_lowers_cost() {
    let mut cfg = EncounterConfig::crossing();
    cfg.mpc.solver.guide_clearance = Some(3.0);
    let intent = DubinsIntent::new([8.0, -6.0, 1.2], [10.0, 12.0, 1.57], 1.0, cfg.mpc.intruder_turn, 1.0).unwrap();
    let mut last = f64::NEG_INFINITY;
    let mut feasible = 0;
    for rho in [0.5, 1.0, 2.0, 3.0, 4.0, 5.0] {
        cfg.mpc.rho = rho;
        let p = MpcProblem {
            config: &cfg.mpc,
            ownship: [2.0, 0.0, 0.0],
            target: [24.0, 0.0, 0.0],
            intruder: Some(IntruderView { state: intent.start, intent: &intent, arrival_tolerance: 0.5 }),
            time: 0.0,
            warm_start: None,
            seed: 5,
            enforce_separation: true,
        };
        let cost = match solve_mpc(&p) {
            Ok(s) => {
                feasible += 1;
                s.cost
            }
            Err(MpcError::Infeasible { .. }) => f64::INFINITY,
            Err(e) => panic!("{e}"),
        };
        assert!(cost >= last, "rho {rho}: {cost} < {last}");
        last = cost;
    }
    assert!(feasible >= 2);
}

#[test]
fn branch_table_for_two_stage_tree() {
    let intent = far_problem_intent();
    let bound = InputBound::symmetric(0.3);
    let tree = ScenarioTree::new(2);
    for j in 1..=9usize {
        for k in 0..2usize {
            let c = j.div_ceil(3usize.pow((2 - k - 1) as u32)) % 3;
            let expected = [bound.hi, bound.lo, intent.input(k as f64)][c];
            assert_eq!(intruder_branch_input(j, k, 2, bound, &intent, 0.0).unwrap(), expected);
            let b = [Branch::Max, Branch::Min, Branch::Nominal][c];
            assert_eq!(tree.words[j - 1][k], b);
        }
    }
    assert!(intruder_branch_input(10, 0, 2, bound, &intent, 0.0).is_err());
}

#[test]
fn invalid_config_rejected() {
    let mut cfg = EncounterConfig::crossing();
    cfg.mpc.robust_horizon = 8;
    cfg.mpc.q[0][0] = -1.0;
    let issues = cfg.validate("case");
    assert!(issues.iter().any(|i| i.path == "case.mpc.robust_horizon"));
    assert!(issues.iter().any(|i| i.path == "case.mpc.q"));
    assert!(closed_loop(&cfg, 0).is_err());
}
