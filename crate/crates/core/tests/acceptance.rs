//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::f64::consts::TAU;
use std::fs;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::RngExt;
use reactive_horizon::dynamics::{defect, ControlInput, ModelParams, RobotState};
use reactive_horizon::geometry::*;
use reactive_horizon::io::{load_scenario, packaged_scenarios};
use reactive_horizon::planner::{
    self, check_discretization, verify_minp_constraint, NlpSolution, PlanProblem, PlannerConfig, SolveStatus,
};
use reactive_horizon::reactive_controller::ReactParams;
use reactive_horizon::reactive_set::{audit_off_grid, calibrate, default_model, CalibrationConfig};
use reactive_horizon::sensor::{BeliefMap, Bounds, SensorParams};
use reactive_horizon::simulator::{build_problem, initial_belief, monte_carlo_safety, run, Outcome, Scenario};

use common::*;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn scenario(name: &str) -> Scenario {
    load_scenario(&scenario_path(name)).unwrap().scenario
}

fn solve(sc: &Scenario, secure: bool) -> Result<(PlanProblem, NlpSolution), String> {
    let belief = initial_belief(sc).map_err(|e| e.to_string())?;
    let p = build_problem(sc, sc.start, &belief).map_err(|e| e.to_string())?;
    let sol = if secure {
        planner::plan(&p, None)
    } else {
        planner::plan_baseline(&p, None)
    }
    .map_err(|e| e.to_string())?;
    Ok((p, sol))
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Narrower passage: both converge, slower final time, slower in the gap.
fn needle_slowdown() -> Check {
    let passage_speed = |sol: &NlpSolution| {
        sol.states
            .iter()
            .filter(|x| (2.0..=3.5).contains(&x.position.x))
            .map(|x| x.linear_speed)
            .fold(f64::INFINITY, f64::min)
    };
    let (_, wide) = solve(&scenario("needle_050"), true)?;
    let (_, narrow) = solve(&scenario("needle_020"), true)?;
    let ratio = narrow.t_f / wide.t_f;
    let (sw, sn) = (passage_speed(&wide), passage_speed(&narrow));
    ensure(
        wide.converged() && narrow.converged() && ratio >= 1.10 && sn < sw,
        format!(
            "t_f {:.3} vs {:.3} (ratio {ratio:.3}), passage speed {sw:.3} vs {sn:.3}, status {:?}/{:?}",
            wide.t_f, narrow.t_f, wide.status, narrow.status
        ),
    )
}

/// Blind corner: baseline hits the hidden box, secure stops short of it.
fn blind_corner() -> Check {
    let sc = scenario("blind_corner");
    let base = run(&sc, false, 0).map_err(|e| e.to_string())?;
    let secure = run(&sc, true, 0).map_err(|e| e.to_string())?;
    let (tb, ts) = (base.plans[0].solution.t_f, secure.plans[0].solution.t_f);
    ensure(
        base.collision && !secure.collision && !secure.stops.is_empty() && ts > tb,
        format!(
            "baseline {:?}, secure {:?} with {} stop(s), planned t_f {tb:.3} vs {ts:.3}",
            base.outcome,
            secure.outcome,
            secure.stops.len()
        ),
    )
}

/// Random hidden boxes: the secure planner never collides.
fn monte_carlo() -> Check {
    let sc = scenario("blind_corner");
    let mc = monte_carlo_safety(&sc, 50, 0, true).map_err(|e| e.to_string())?;
    let bad: Vec<u64> = mc
        .results
        .iter()
        .filter(|r| {
            r.collision
                || !(matches!(r.outcome, Outcome::GoalReached | Outcome::InfeasibleAfterDetection) || r.stops > 0)
        })
        .map(|r| r.seed)
        .collect();
    ensure(
        mc.collisions == 0 && bad.is_empty(),
        format!(
            "{} trials: {} collisions, {} goal, {} infeasible after detection, {} other, unexplained seeds {bad:?}",
            mc.trials, mc.collisions, mc.goal_reached, mc.infeasible_after_detection, mc.other
        ),
    )
}

/// Containment and separation signs agree with boundary sampling.
fn geometry_oracle() -> Check {
    const INSTANCES: usize = 1000;
    const SAMPLES: usize = 10_000;
    const BAND: f64 = 1e-6;
    let mut r = rng(2024);
    let (mut checked, mut mismatches) = (0, 0);
    for _ in 0..INSTANCES {
        let p = random_polygon(&mut r);
        let e = random_ellipse_for(&mut r, &p);
        let phase = r.random_range(0.0..TAU);
        let m = ellipsoid_in_polygon_margin(&e, &p);
        if m.abs() >= BAND {
            checked += 1;
            mismatches += usize::from((m > 0.0) != sampled_contained(&e, &p, SAMPLES, phase));
        }
        let s = ellipsoid_polygon_separation(&e, &p);
        if s.abs() >= BAND {
            checked += 1;
            mismatches += usize::from((s <= 0.0) != sampled_intersects(&e, &p, SAMPLES, phase));
        }
    }
    ensure(
        mismatches == 0,
        format!("{INSTANCES} instances, {checked} sign checks, {mismatches} mismatches"),
    )
}

/// Default calibration contains every simulated reaction path.
fn calibration() -> Check {
    let cfg = CalibrationConfig::default();
    let (rp, model, sensor) = (ReactParams::default(), ModelParams::default(), SensorParams::default());
    let clock = Instant::now();
    let (fitted, report) = calibrate(&cfg, &rp, &model, &sensor).map_err(|e| e.to_string())?;
    let secs = clock.elapsed().as_secs_f64();
    let audit = audit_off_grid(&default_model(), 100, 1, &cfg, &rp, &model, &sensor).map_err(|e| e.to_string())?;
    let reach = fitted.forward_reach(1.0, 0.0).map_err(|e| e.to_string())?;
    ensure(
        report.points_contained == report.points_total && audit.fraction_contained() >= 0.99 && reach >= 0.5,
        format!(
            "grid {}/{} points contained in {secs:.0} s, off-grid {:.4} over {} states, reach(1, 0) = {reach:.3} m",
            report.points_contained,
            report.points_total,
            audit.fraction_contained(),
            audit.states
        ),
    )
}

/// Normalized trapezoidal defect on a smooth reference shrinks by ~4 per halving.
fn collocation_order() -> Check {
    let v = |t: f64| 1.0 + 0.5 * t.sin();
    let w = |t: f64| 0.8 * (0.7 * t).cos();
    let th = |t: f64| 0.8 / 0.7 * (0.7 * t).sin();
    let u = |t: f64| ControlInput::new(0.5 * t.cos(), -0.56 * (0.7 * t).sin());
    let max_defect = |k: usize| {
        let t_f = 4.0;
        let h = t_f / (k - 1) as f64;
        let fine = 200;
        let (mut x, mut y) = (0.0, 0.0);
        let mut xs = vec![RobotState::new(0.0, 0.0, 0.0, v(0.0), w(0.0))];
        for i in 1..k {
            let dt = h / fine as f64;
            let f = |t: f64| (v(t) * th(t).cos(), v(t) * th(t).sin());
            for s in 0..fine {
                let t0 = (i - 1) as f64 * h + s as f64 * dt;
                let (a, b, c) = (f(t0), f(t0 + dt / 2.0), f(t0 + dt));
                x += dt / 6.0 * (a.0 + 4.0 * b.0 + c.0);
                y += dt / 6.0 * (a.1 + 4.0 * b.1 + c.1);
            }
            let t = i as f64 * h;
            xs.push(RobotState::new(x, y, th(t), v(t), w(t)));
        }
        (0..k - 1)
            .map(|i| defect(&xs[i], &u(i as f64 * h), &xs[i + 1], &u((i + 1) as f64 * h), h).norm() / h)
            .fold(0.0, f64::max)
    };
    let ratios: Vec<f64> = [11, 21, 41]
        .iter()
        .map(|&k| max_defect(k) / max_defect(2 * k - 1))
        .collect();
    ensure(
        ratios.iter().all(|r| (3.0..=5.0).contains(r)),
        format!(
            "halving ratios {:?}",
            ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>()
        ),
    )
}

/// Every packaged secure plan has witnesses and survives dense resampling.
fn packaged_plans_verify() -> Check {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, _) in packaged_scenarios() {
        let sc = scenario(name);
        let (p, sol) = solve(&sc, true)?;
        let traj = sol.trajectory();
        let minp = verify_minp_constraint(&traj, &p, 1e-4).map_err(|e| e.to_string())?;
        let dense = check_discretization(&traj, &p, sol.lag, 10).map_err(|e| e.to_string())?;
        let pass = sol.converged() && minp.passed() && dense.min_margin > 0.0;
        ok &= pass;
        lines.push(format!(
            "{name}: {} witness failures, dense margin {:.4}",
            minp.failures.len(),
            dense.min_margin
        ));
    }
    ensure(ok, lines.join("; "))
}

/// Rest to rest over 2 m in free space approaches the bang-bang time.
fn rest_to_rest() -> Check {
    let belief = BeliefMap::new(Bounds::new(Vec2::new(-1.0, -3.0), Vec2::new(7.0, 3.0)), vec![], 0.05)
        .map_err(|e| e.to_string())?;
    let p = PlanProblem::new(
        RobotState::at_rest(Vec2::zeros(), 0.0),
        Vec2::new(2.0, 0.0),
        belief,
        ModelParams::default(),
        default_model(),
        SensorParams::default(),
        &PlannerConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let sol = planner::plan_baseline(&p, None).map_err(|e| e.to_string())?;
    ensure(
        sol.status == SolveStatus::Converged && (2.82..=3.0).contains(&sol.t_f),
        format!(
            "t_f = {:.4} s ({:?}, {} iterations)",
            sol.t_f, sol.status, sol.iterations
        ),
    )
}

/// Same seed, same bytes.
fn cli_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sc = scenario_path("blind_corner");
    let mut traces = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_reactive-horizon"))
            .args([
                "simulate",
                sc.to_str().unwrap(),
                "--secure",
                "--seed",
                "7",
                "--out",
                out.to_str().unwrap(),
            ])
            .env_remove("REACTIVE_HORIZON_SEED")
            .output()
            .map_err(|e| e.to_string())?
            .status;
        if !status.success() {
            return Err(format!("simulate exited with {status}"));
        }
        traces.push(fs::read(out.join("trace.csv")).map_err(|e| e.to_string())?);
    }
    ensure(
        traces[0] == traces[1],
        format!("two runs, {} bytes each", traces[0].len()),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("narrow passage slows the secure plan", needle_slowdown),
        ("blind corner: baseline collides, secure stops", blind_corner),
        ("50 random hidden boxes without collision", monte_carlo),
        ("geometry margins match sampling", geometry_oracle),
        ("default calibration contains all reactions", calibration),
        ("collocation defect order", collocation_order),
        ("packaged secure plans verify", packaged_plans_verify),
        ("rest-to-rest time", rest_to_rest),
        ("seeded simulation is byte-identical", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let result = check();
        let secs = clock.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {}: PASS  {name} ({detail}) [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({detail}) [{secs:.1} s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
