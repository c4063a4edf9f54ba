//! Closed-loop execution: plan on the belief, execute, sense, react to
//! unknown obstacles, update the belief and replan.

use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, wrap_angle, ControlInput, ModelParams, RobotState};
use crate::error::{Error, Result};
use crate::geometry::{
    ellipsoid_polygon_separation, point_polygon_distance, segment_intersects_polygon, ConvexPolygon, Vec2,
};
use crate::planner::{self, grid_path, interpolate, NlpSolution, PlanProblem, PlannerConfig, Trajectory};
use crate::reactive_controller::{ReactParams, ReactiveController};
use crate::reactive_set::{default_model, ReactiveSetModel};
use crate::sensor::{
    detect, fov_polygon, line_of_sight, update_belief, BeliefMap, Bounds, DetectionEvent, SensorParams,
    DETECTION_SPACING,
};

/// Loop timing and termination settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Control period (s).
    pub dt: f64,
    /// Simulated time limit (s).
    pub max_time: f64,
    /// Wall-clock limit for one run (s).
    pub max_wall_time: f64,
    /// Belief grid cell size (m).
    pub cell: f64,
    /// Radius of the region treated as observed before the first plan;
    /// twice the sensor range when absent.
    pub prior_radius: Option<f64>,
    pub goal_tolerance: f64,
    pub max_replans: usize,
    /// Correct plan controls by feedback on the planned state. Without it
    /// the plan is replayed open loop.
    pub tracking: bool,
    /// Time allowed after a plan ends to settle onto its final node (s).
    pub settle_time: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            max_time: 60.0,
            max_wall_time: 1800.0,
            cell: 0.05,
            prior_radius: None,
            goal_tolerance: 0.01,
            max_replans: 20,
            tracking: true,
            settle_time: 3.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dt > 0.0
            && self.max_time > 0.0
            && self.max_wall_time > 0.0
            && self.cell > 0.0
            && self.goal_tolerance > 0.0
            && self.settle_time >= 0.0
            && self.prior_radius.is_none_or(|r| r >= 0.0);
        if !ok {
            return Err(Error::InvalidParams("simulation settings must be positive".into()));
        }
        Ok(())
    }
}

/// A world, its possibly wrong map, and every parameter block of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub notes: String,
    pub world: Bounds,
    pub true_obstacles: Vec<ConvexPolygon>,
    pub provided_obstacles: Vec<ConvexPolygon>,
    pub start: RobotState,
    pub goal: Vec2,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub sensor: SensorParams,
    #[serde(default)]
    pub planner: PlannerConfig,
    /// Reactive-set model; the bundled default calibration when absent.
    #[serde(default)]
    pub reactive: Option<ReactiveSetModel>,
    #[serde(default)]
    pub controller: ReactParams,
    #[serde(default)]
    pub simulation: SimConfig,
}

impl Scenario {
    pub fn reactive_model(&self) -> ReactiveSetModel {
        self.reactive.unwrap_or_else(default_model)
    }

    /// Checks parameters, that start and goal are free in both the true
    /// world and the map, and that a grid path exists in each.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.sensor.validate()?;
        self.planner.validate()?;
        self.controller.validate()?;
        self.simulation.validate()?;
        self.reactive_model().validate()?;
        if !self.start.within_limits(&self.model) {
            return Err(Error::Schema("start speeds exceed the model limits".into()));
        }
        let radius = self.reactive_model().floor;
        for (label, obstacles) in [("true", &self.true_obstacles), ("provided", &self.provided_obstacles)] {
            for (name, p) in [("start", self.start.position), ("goal", self.goal)] {
                if !self.world.contains(p) {
                    return Err(Error::Schema(format!("{name} lies outside the world")));
                }
                if obstacles.iter().any(|o| o.contains(p)) {
                    return Err(Error::InfeasibleScenario(format!(
                        "{name} lies inside a {label} obstacle"
                    )));
                }
            }
            grid_path(
                &self.world,
                obstacles,
                self.simulation.cell,
                self.start.position,
                self.goal,
                radius,
            )
            .map_err(|_| Error::InfeasibleScenario(format!("no path from start to goal in the {label} world")))?;
        }
        Ok(())
    }

    /// True obstacles absent from the map.
    pub fn unknown_obstacles(&self) -> Vec<ConvexPolygon> {
        self.true_obstacles
            .iter()
            .filter(|o| !self.provided_obstacles.contains(o))
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SimMode {
    PlanExec,
    React,
    Replan,
}

impl SimMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SimMode::PlanExec => "PLAN_EXEC",
            SimMode::React => "REACT",
            SimMode::Replan => "REPLAN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    GoalReached,
    Collision,
    /// Replanning failed after an unknown obstacle was found.
    InfeasibleAfterDetection,
    /// Planning failed with no detection to blame.
    PlanFailed,
    TimeLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub state: RobotState,
    pub control: ControlInput,
    pub mode: SimMode,
    /// Distance from the robot to the nearest true obstacle (m).
    pub clearance: f64,
    /// The reactive controller fell back to maximal braking this step.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub t: f64,
    pub solution: NlpSolution,
    /// Wall-clock solve time; excluded from byte-compared outputs.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSnapshot {
    pub t: f64,
    pub label: &'static str,
    pub belief: BeliefMap,
}

#[derive(Debug, Clone)]
pub struct SimTrace {
    pub scenario: String,
    pub secure: bool,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub detections: Vec<DetectionEvent>,
    pub plans: Vec<PlanRecord>,
    pub snapshots: Vec<BeliefSnapshot>,
    /// Times at which a reactive maneuver reached rest.
    pub stops: Vec<f64>,
    pub outcome: Outcome,
    pub collision: bool,
    /// A state inside (or swept through) a true obstacle.
    pub collision_state: Option<RobotState>,
    pub goal_reached: bool,
}

impl SimTrace {
    pub fn min_clearance(&self) -> f64 {
        self.steps.iter().map(|s| s.clearance).fold(f64::INFINITY, f64::min)
    }

    pub fn all_plans_converged(&self) -> bool {
        self.plans.iter().all(|p| p.solution.converged())
    }
}

/// True iff the robot at `x` is inside a true obstacle, or the segment from
/// `prev` to `x` crosses one.
pub fn collision_check(prev: Option<&RobotState>, x: &RobotState, true_obstacles: &[ConvexPolygon]) -> bool {
    true_obstacles
        .iter()
        .any(|o| o.contains(x.position) || prev.is_some_and(|p| segment_intersects_polygon(p.position, x.position, o)))
}

/// Whether the rest of `sol` (from `from_time` on) remains safe on `belief`:
/// every remaining reactive set is clear of the known obstacles, and each
/// of its cells is either observed free or will be seen, unoccluded by
/// known obstacles, from an earlier remaining node.
pub fn plan_is_safe(sol: &NlpSolution, p: &PlanProblem, belief: &BeliefMap, from_time: f64) -> bool {
    let traj = sol.trajectory();
    let times = traj.times();
    let first = times.iter().position(|&t| t >= from_time - 1e-9).unwrap_or(times.len());
    let grid = &belief.observed_free;
    let fovs: Vec<ConvexPolygon> = traj.states.iter().map(|x| fov_polygon(x, &p.sensor)).collect();
    for i in first..traj.states.len() {
        let mut x = traj.states[i];
        x.linear_speed = x.linear_speed.clamp(0.0, p.reactive.v_max);
        x.angular_speed = x.angular_speed.clamp(-p.reactive.omega_max, p.reactive.omega_max);
        let Ok(e) = p.reactive.evaluate(&x) else {
            return false;
        };
        if belief
            .known_obstacles
            .iter()
            .any(|o| ellipsoid_polygon_separation(&e, o) <= 0.0)
        {
            return false;
        }
        for c in grid.cells_in_ellipsoid(&e) {
            if grid.get(c) {
                continue;
            }
            let q = grid.center(c);
            let seen = (first..i)
                .any(|j| fovs[j].contains(q) && line_of_sight(traj.states[j].position, q, &belief.known_obstacles));
            if !seen {
                return false;
            }
        }
        let (lo, hi) = e.bounds();
        if !belief.bounds.contains(lo) || !belief.bounds.contains(hi) {
            return false;
        }
    }
    true
}

fn clearance(x: &RobotState, obstacles: &[ConvexPolygon]) -> f64 {
    obstacles
        .iter()
        .map(|o| point_polygon_distance(x.position, o))
        .fold(f64::INFINITY, f64::min)
}

/// Linear interpolation of the node controls at time `t`.
fn control_at(traj: &Trajectory, t: f64) -> ControlInput {
    let h = traj.step();
    let k = traj.controls.len();
    if t >= traj.t_f {
        return ControlInput::default();
    }
    if k < 2 || h <= 0.0 {
        return traj.controls.first().copied().unwrap_or_default();
    }
    let u = (t / h).clamp(0.0, (k - 1) as f64);
    let i = (u.floor() as usize).min(k - 2);
    let s = u - i as f64;
    let (a, b) = (traj.controls[i], traj.controls[i + 1]);
    ControlInput::new(
        a.linear_accel * (1.0 - s) + b.linear_accel * s,
        a.angular_accel * (1.0 - s) + b.angular_accel * s,
    )
}

const TRACK_POSITION: f64 = 4.0;
const TRACK_SPEED: f64 = 4.0;
const TRACK_CROSS: f64 = 1.0;
const TRACK_HEADING: f64 = 6.0;
const TRACK_TURN_RATE: f64 = 5.0;

/// Plan control at `t` plus feedback towards the planned state, which is
/// held at the final node once the plan has ended.
fn tracking_control(traj: &Trajectory, t: f64, x: &RobotState, model: &ModelParams) -> ControlInput {
    let r = interpolate(traj, t.min(traj.t_f));
    let ff = control_at(traj, t);
    let (tangent, normal) = (
        Vec2::new(r.heading.cos(), r.heading.sin()),
        Vec2::new(-r.heading.sin(), r.heading.cos()),
    );
    let d = r.position - x.position;
    let along = d.dot(&tangent);
    let cross = d.dot(&normal);
    let heading_cmd = r.heading + (TRACK_CROSS * cross).atan();
    ControlInput::new(
        ff.linear_accel + TRACK_POSITION * along + TRACK_SPEED * (r.linear_speed - x.linear_speed),
        ff.angular_accel
            + TRACK_HEADING * wrap_angle(heading_cmd - x.heading)
            + TRACK_TURN_RATE * (r.angular_speed - x.angular_speed),
    )
    .clamped(model)
}

/// Initial belief: the map, plus everything visible within the prior
/// radius of the start. Unknown obstacles seen there join the map.
pub fn initial_belief(sc: &Scenario) -> Result<BeliefMap> {
    let mut belief = BeliefMap::new(sc.world, sc.provided_obstacles.clone(), sc.simulation.cell)?;
    let radius = sc.simulation.prior_radius.unwrap_or(2.0 * sc.sensor.range);
    let s = sc.start.position;
    for o in &sc.true_obstacles {
        if belief.knows(o) {
            continue;
        }
        let seen = o
            .boundary_samples(DETECTION_SPACING)
            .iter()
            .any(|q| (q - s).norm() <= radius && line_of_sight(s, *q, &sc.true_obstacles));
        if seen {
            belief.known_obstacles.push(o.clone());
        }
    }
    let grid = belief.observed_free.clone();
    for idx in grid.cells_in_disc(s, radius) {
        let c = grid.center(idx);
        let inside_true = sc.true_obstacles.iter().any(|o| o.contains(c));
        if !inside_true && !belief.in_known_obstacle(c) && line_of_sight(s, c, &sc.true_obstacles) {
            belief.observed_free.set(idx, true);
        }
    }
    update_belief(&mut belief, &sc.start, &[], &sc.true_obstacles, &sc.sensor);
    Ok(belief)
}

/// Planning problem from `start` over `belief` with the scenario's settings.
pub fn build_problem(sc: &Scenario, start: RobotState, belief: &BeliefMap) -> Result<PlanProblem> {
    PlanProblem::new(
        start,
        sc.goal,
        belief.clone(),
        sc.model,
        sc.reactive_model(),
        sc.sensor,
        &sc.planner,
    )
}

fn solve(
    sc: &Scenario,
    secure: bool,
    start: RobotState,
    belief: &BeliefMap,
    warm: Option<&Trajectory>,
) -> Result<(PlanProblem, NlpSolution, f64)> {
    let p = build_problem(sc, start, belief)?;
    let clock = Instant::now();
    let sol = if secure {
        planner::plan(&p, warm)?
    } else {
        planner::plan_baseline(&p, warm)?
    };
    Ok((p, sol, clock.elapsed().as_secs_f64()))
}

/// Runs the closed loop. The loop draws no random numbers; `seed` is
/// recorded so traces identify the trial that produced them.
pub fn run(sc: &Scenario, secure: bool, seed: u64) -> Result<SimTrace> {
    sc.validate()?;
    let cfg = sc.simulation;
    let wall = Instant::now();
    let mut belief = initial_belief(sc)?;
    let mut trace = SimTrace {
        scenario: sc.name.clone(),
        secure,
        seed,
        steps: Vec::new(),
        detections: Vec::new(),
        plans: Vec::new(),
        snapshots: vec![BeliefSnapshot {
            t: 0.0,
            label: "start",
            belief: belief.clone(),
        }],
        stops: Vec::new(),
        outcome: Outcome::TimeLimit,
        collision: false,
        collision_state: None,
        goal_reached: false,
    };

    let mut x = sc.start;
    let mut t = 0.0;
    let mut replans = 0;
    let (mut problem, mut sol, secs) = match solve(sc, secure, x, &belief, None) {
        Ok(v) => v,
        Err(Error::InfeasibleScenario(_)) => {
            trace.outcome = Outcome::PlanFailed;
            return Ok(trace);
        }
        Err(e) => return Err(e),
    };
    trace.plans.push(PlanRecord {
        t,
        solution: sol.clone(),
        seconds: secs,
    });
    if !sol.executable(sc.planner.solver.feasibility_tol) {
        trace.outcome = Outcome::PlanFailed;
        return Ok(trace);
    }
    let mut plan_start = 0.0;
    let mut mode = SimMode::PlanExec;
    let mut controller: Option<ReactiveController> = None;
    let mut held = ControlInput::default();
    let mut react_clock = 0.0;
    let hold_steps = ((sc.controller.dt / cfg.dt).round() as usize).max(1);
    let mut react_step = 0usize;

    while t < cfg.max_time - 1e-9 {
        if wall.elapsed().as_secs_f64() > cfg.max_wall_time {
            break;
        }
        let at_goal = (x.position - sc.goal).norm() <= cfg.goal_tolerance
            && x.linear_speed.abs() <= sc.planner.goal_speed_cap + 1e-2;
        if at_goal && mode == SimMode::PlanExec {
            trace.outcome = Outcome::GoalReached;
            trace.goal_reached = true;
            return Ok(trace);
        }

        let mut fallback = false;
        let u = match mode {
            SimMode::PlanExec | SimMode::Replan => {
                let tau = t - plan_start;
                let settle = if cfg.tracking { cfg.settle_time } else { 0.0 };
                if tau >= sol.t_f + settle - 1e-9 {
                    // Plan exhausted away from the goal: plan again from here.
                    replans += 1;
                    if replans > cfg.max_replans {
                        trace.outcome = Outcome::PlanFailed;
                        return Ok(trace);
                    }
                    let mut start = x;
                    start.linear_speed = start.linear_speed.max(0.0);
                    match solve(sc, secure, start, &belief, None) {
                        Ok((p, s, secs)) => {
                            trace.plans.push(PlanRecord {
                                t,
                                solution: s.clone(),
                                seconds: secs,
                            });
                            if !s.executable(sc.planner.solver.feasibility_tol) {
                                trace.outcome = failure_outcome(&trace);
                                return Ok(trace);
                            }
                            problem = p;
                            sol = s;
                            plan_start = t;
                            mode = SimMode::Replan;
                        }
                        Err(Error::InfeasibleScenario(_)) => {
                            trace.outcome = failure_outcome(&trace);
                            return Ok(trace);
                        }
                        Err(e) => return Err(e),
                    }
                }
                let traj = sol.trajectory();
                if cfg.tracking {
                    tracking_control(&traj, t - plan_start, &x, &sc.model)
                } else {
                    control_at(&traj, t - plan_start)
                }
            }
            SimMode::React => {
                let ctl = controller.as_mut().expect("controller exists in REACT");
                if react_step.is_multiple_of(hold_steps) {
                    let before = ctl.fallbacks;
                    held = ctl.step(&x);
                    fallback = ctl.fallbacks > before;
                }
                react_step += 1;
                held
            }
        };

        let prev = x;
        x = integrate(&x, &u, cfg.dt, &sc.model);
        t += cfg.dt;
        if mode == SimMode::Replan {
            mode = SimMode::PlanExec;
        }
        let c = clearance(&x, &sc.true_obstacles);
        trace.steps.push(StepRecord {
            t,
            state: x,
            control: u,
            mode,
            clearance: c,
            fallback,
        });
        if collision_check(Some(&prev), &x, &sc.true_obstacles) {
            trace.collision = true;
            trace.collision_state = Some(x);
            trace.outcome = Outcome::Collision;
            return Ok(trace);
        }

        let events = detect(t, &x, &sc.true_obstacles, &belief, &sc.sensor);
        update_belief(&mut belief, &x, &events, &sc.true_obstacles, &sc.sensor);
        if !events.is_empty() {
            trace.detections.extend(events.iter().cloned());
            trace.snapshots.push(BeliefSnapshot {
                t,
                label: "detection",
                belief: belief.clone(),
            });
            if mode == SimMode::PlanExec && !plan_is_safe(&sol, &problem, &belief, t - plan_start) {
                let nearest = events
                    .iter()
                    .min_by(|a, b| {
                        point_polygon_distance(x.position, &a.obstacle)
                            .total_cmp(&point_polygon_distance(x.position, &b.obstacle))
                    })
                    .expect("events are nonempty");
                controller = Some(ReactiveController::new(
                    x,
                    nearest.obstacle.clone(),
                    sc.controller,
                    sc.model,
                ));
                mode = SimMode::React;
                react_step = 0;
                react_clock = 0.0;
            }
        }

        if mode == SimMode::React {
            react_clock += cfg.dt;
            let ctl = controller.as_ref().expect("controller exists in REACT");
            if ctl.at_rest(&x) || react_clock >= sc.controller.time_cap {
                trace.stops.push(t);
                trace.snapshots.push(BeliefSnapshot {
                    t,
                    label: "stop",
                    belief: belief.clone(),
                });
                controller = None;
                replans += 1;
                let mut start = x;
                start.linear_speed = start.linear_speed.max(0.0);
                match solve(sc, secure, start, &belief, None) {
                    Ok((p, s, secs)) => {
                        trace.plans.push(PlanRecord {
                            t,
                            solution: s.clone(),
                            seconds: secs,
                        });
                        if !s.executable(sc.planner.solver.feasibility_tol) {
                            trace.outcome = Outcome::InfeasibleAfterDetection;
                            return Ok(trace);
                        }
                        problem = p;
                        sol = s;
                        plan_start = t;
                        mode = SimMode::Replan;
                    }
                    Err(Error::InfeasibleScenario(_)) => {
                        trace.outcome = Outcome::InfeasibleAfterDetection;
                        return Ok(trace);
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    trace.outcome = Outcome::TimeLimit;
    Ok(trace)
}

fn failure_outcome(trace: &SimTrace) -> Outcome {
    if trace.detections.is_empty() {
        Outcome::PlanFailed
    } else {
        Outcome::InfeasibleAfterDetection
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub obstacle: ConvexPolygon,
    pub outcome: Outcome,
    pub collision: bool,
    pub detections: usize,
    pub stops: usize,
    pub plans_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub secure: bool,
    pub collisions: usize,
    pub goal_reached: usize,
    pub infeasible_after_detection: usize,
    pub other: usize,
    pub detections: usize,
    pub results: Vec<TrialResult>,
}

/// Draws a random unknown box that keeps the scenario feasible.
fn random_box(base: &Scenario, rng: &mut ChaCha8Rng) -> Option<ConvexPolygon> {
    const ATTEMPTS: usize = 1000;
    const KEEP_OUT: f64 = 0.5;
    let radius = base.reactive_model().floor;
    for _ in 0..ATTEMPTS {
        let side = rng.random_range(0.2..=0.6);
        let c = Vec2::new(
            rng.random_range(base.world.min.x..base.world.max.x),
            rng.random_range(base.world.min.y..base.world.max.y),
        );
        let Ok(b) = ConvexPolygon::centered_box(c, side, side) else {
            continue;
        };
        let (lo, hi) = b.bounds();
        if !base.world.contains(lo) || !base.world.contains(hi) {
            continue;
        }
        if point_polygon_distance(base.start.position, &b) < KEEP_OUT
            || point_polygon_distance(base.goal, &b) < KEEP_OUT
        {
            continue;
        }
        let overlaps = base.true_obstacles.iter().any(|o| {
            b.vertices().iter().any(|v| o.contains(*v))
                || o.vertices().iter().any(|v| b.contains(*v))
                || o.vertices()
                    .iter()
                    .zip(o.vertices().iter().cycle().skip(1))
                    .any(|(p, q)| segment_intersects_polygon(*p, *q, &b))
        });
        if overlaps {
            continue;
        }
        let mut all = base.true_obstacles.clone();
        all.push(b.clone());
        if grid_path(
            &base.world,
            &all,
            base.simulation.cell,
            base.start.position,
            base.goal,
            radius,
        )
        .is_ok()
        {
            return Some(b);
        }
    }
    None
}

/// Runs `n_trials` variants of `base`, each with one random unknown box,
/// in parallel. Trial `i` uses seed `seed + i`.
pub fn monte_carlo_safety(base: &Scenario, n_trials: usize, seed: u64, secure: bool) -> Result<MonteCarloSummary> {
    base.validate()?;
    let results: Vec<Result<TrialResult>> = (0..n_trials as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let b = random_box(base, &mut rng)
                .ok_or_else(|| Error::InfeasibleScenario("no admissible random obstacle".into()))?;
            let mut sc = base.clone();
            sc.name = format!("{}-trial-{i}", base.name);
            sc.true_obstacles.push(b.clone());
            let trace = run(&sc, secure, s)?;
            Ok(TrialResult {
                seed: s,
                obstacle: b,
                outcome: trace.outcome,
                collision: trace.collision,
                detections: trace.detections.len(),
                stops: trace.stops.len(),
                plans_converged: trace.all_plans_converged(),
            })
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let count = |o: Outcome| results.iter().filter(|r| r.outcome == o).count();
    Ok(MonteCarloSummary {
        trials: n_trials,
        secure,
        collisions: results.iter().filter(|r| r.collision).count(),
        goal_reached: count(Outcome::GoalReached),
        infeasible_after_detection: count(Outcome::InfeasibleAfterDetection),
        other: count(Outcome::PlanFailed) + count(Outcome::TimeLimit),
        detections: results.iter().map(|r| r.detections).sum(),
        results,
    })
}
