mod common;

use reactive_horizon::dynamics::RobotState;
use reactive_horizon::geometry::{ConvexPolygon, Vec2};
use reactive_horizon::io;
use reactive_horizon::planner;
use reactive_horizon::simulator::*;

use common::scenario_path;

fn load(name: &str) -> Scenario {
    io::load_scenario(&scenario_path(name)).unwrap().scenario
}

fn check_trace_consistency(sc: &Scenario, trace: &SimTrace) {
    let dt = sc.simulation.dt;
    for w in trace.steps.windows(2) {
        assert!((w[1].t - w[0].t - dt).abs() < 1e-9);
    }
    for s in &trace.steps {
        assert!(s.state.within_limits(&sc.model), "{s:?}");
        assert!(s.control.within_limits(&sc.model), "{s:?}");
    }
    let mut observed = 0;
    for snap in &trace.snapshots {
        let b = &snap.belief;
        for o in &sc.provided_obstacles {
            assert!(b.knows(o));
        }
        let grid = &b.observed_free;
        for idx in (0..grid.len()).filter(|&i| grid.get(i)) {
            let c = grid.center(idx);
            assert!(
                !sc.true_obstacles.iter().any(|o| o.contains(c)),
                "observed-free cell {c:?} in an obstacle"
            );
        }
        assert!(
            b.observed_count() >= observed,
            "observed region shrank at {}",
            snap.label
        );
        observed = b.observed_count();
    }
}

#[test]
fn empty_world_reaches_goal() {
    let sc = load("empty");
    let trace = run(&sc, true, 0).unwrap();
    assert_eq!(trace.outcome, Outcome::GoalReached);
    assert!(trace.goal_reached && !trace.collision);
    assert!(trace.detections.is_empty() && trace.stops.is_empty());
    assert!(trace.all_plans_converged());
    let last = trace.steps.last().unwrap().state;
    assert!((last.position - sc.goal).norm() <= sc.simulation.goal_tolerance);
    check_trace_consistency(&sc, &trace);
}

#[test]
fn blind_corner_baseline_collides_and_secure_stops() {
    let sc = load("blind_corner");
    let base = run(&sc, false, 7).unwrap();
    assert!(base.collision);
    assert_eq!(base.outcome, Outcome::Collision);
    assert!(base.collision_state.is_some());

    let secure = run(&sc, true, 7).unwrap();
    assert!(!secure.collision);
    assert!(!secure.detections.is_empty());
    let first = secure.detections[0].time;
    assert!(secure.stops.iter().any(|&t| t >= first), "no stop after detection");
    assert!(matches!(
        secure.outcome,
        Outcome::GoalReached | Outcome::InfeasibleAfterDetection
    ));
    assert!(secure.min_clearance() > 0.0);
    assert!(secure.steps.iter().any(|s| s.mode == SimMode::React));
    assert!(secure.plans[0].solution.t_f > base.plans[0].solution.t_f);
    check_trace_consistency(&sc, &secure);
    check_trace_consistency(&sc, &base);
}

#[test]
fn runs_are_deterministic() {
    let sc = load("blind_corner");
    let a = run(&sc, true, 7).unwrap();
    let b = run(&sc, true, 7).unwrap();
    assert_eq!(a.steps, b.steps);
    assert_eq!(a.detections, b.detections);
    assert_eq!(a.stops, b.stops);
    assert_eq!(io::sim_trace_csv(&a, "x").unwrap(), io::sim_trace_csv(&b, "x").unwrap());
}

#[test]
fn collision_check_catches_tunneling() {
    let wall = ConvexPolygon::rectangle(Vec2::new(1.0, -1.0), Vec2::new(1.02, 1.0)).unwrap();
    let before = RobotState::new(0.9, 0.0, 0.0, 2.0, 0.0);
    let after = RobotState::new(1.1, 0.0, 0.0, 2.0, 0.0);
    assert!(!collision_check(None, &after, std::slice::from_ref(&wall)));
    assert!(collision_check(Some(&before), &after, std::slice::from_ref(&wall)));
    let beside = RobotState::new(1.1, 1.5, 0.0, 2.0, 0.0);
    let from = RobotState::new(0.9, 1.5, 0.0, 2.0, 0.0);
    assert!(!collision_check(Some(&from), &beside, &[wall]));
}

#[test]
fn plan_is_safe_on_its_own_belief_only() {
    let sc = load("empty");
    let belief = initial_belief(&sc).unwrap();
    let p = build_problem(&sc, sc.start, &belief).unwrap();
    let sol = planner::plan(&p, None).unwrap();
    assert!(sol.converged());
    assert!(plan_is_safe(&sol, &p, &belief, 0.0));

    // An obstacle appearing on the path makes the rest of the plan unsafe.
    let mid = sol.states[sol.states.len() / 2].position;
    let mut blocked = belief.clone();
    blocked
        .known_obstacles
        .push(ConvexPolygon::centered_box(mid, 0.2, 0.2).unwrap());
    assert!(!plan_is_safe(&sol, &p, &blocked, 0.0));

    // Forgetting everything observed leaves later sets unseen.
    let mut blind = belief.clone();
    for i in 0..blind.observed_free.len() {
        blind.observed_free.set(i, false);
    }
    assert!(!plan_is_safe(&sol, &p, &blind, 0.0));

    // A baseline plan ignores visibility and fails the check.
    let base = planner::plan_baseline(&p, None).unwrap();
    assert!(!plan_is_safe(&base, &p, &belief, 0.0));
}

#[test]
fn initial_belief_promotes_visible_unknowns() {
    let mut sc = load("empty");
    let near = ConvexPolygon::centered_box(sc.start.position + Vec2::new(1.0, 1.0), 0.2, 0.2).unwrap();
    sc.true_obstacles.push(near.clone());
    let b = initial_belief(&sc).unwrap();
    assert!(b.knows(&near));
    assert!(b.observed_count() > 0);
}

#[test]
fn scenario_validation_rejects_bad_endpoints() {
    let mut sc = load("blind_corner");
    sc.goal = Vec2::new(3.0, 0.0);
    assert!(matches!(
        sc.validate(),
        Err(reactive_horizon::Error::InfeasibleScenario(_))
    ));
    let mut sc = load("empty");
    sc.simulation.dt = 0.0;
    assert!(sc.validate().is_err());
}

#[test]
fn unknown_obstacles_are_the_unmapped_ones() {
    let sc = load("blind_corner");
    let unknown = sc.unknown_obstacles();
    assert_eq!(unknown.len(), 1);
    assert!(!sc.provided_obstacles.contains(&unknown[0]));
}
