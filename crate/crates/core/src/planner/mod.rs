//! Secure minimum-time trajectory optimization.
//!
//! The continuous problem is transcribed by trapezoidal collocation on `K`
//! nodes with `h = t_f / (K - 1)`. Every node's reactive ellipse must stay
//! clear of known obstacles, and must fit inside the field of view of the
//! node `lag` steps earlier (or inside the region observed before planning).
//! The baseline planner drops visibility and treats the robot as a point.

mod guess;
mod region;
mod sqp;
mod transcription;
mod verify;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, ModelParams, RobotState};
use crate::error::{Error, Result};
use crate::geometry::{ConvexPolygon, Vec2};
use crate::reactive_set::ReactiveSetModel;
use crate::sensor::{BeliefMap, SensorParams};

pub use guess::{grid_path, initial_guess, resample};
pub use region::observed_region;
pub use sqp::SolverParams;
pub use transcription::{Counts, Mode, Witness};
pub use verify::{
    check_discretization, interpolate, verify_minp_constraint, DenseSample, DiscretizationReport, MinpReport,
};

use transcription::Transcription;

/// Planner settings that are not part of the world description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    /// Node count `K`.
    pub nodes: usize,
    /// Fixed visibility lag in nodes; derived from `lag_time` when absent.
    pub lag: Option<usize>,
    /// Target lag duration at the initial guess.
    pub lag_time: f64,
    /// Extra clearance between reactive ellipses and obstacles (m).
    pub clearance: f64,
    /// Point-robot clearance used by the baseline planner (m).
    pub baseline_clearance: f64,
    /// Depth by which reactive ellipses must sit inside their witness (m),
    /// leaving room for motion between nodes.
    pub visibility_margin: f64,
    /// Bound on `|v|` and `|omega|` at the goal.
    pub goal_speed_cap: f64,
    /// Obstacles farther than this from a visibility pair are ignored as
    /// occluders (m).
    pub occlusion_radius: f64,
    pub solver: SolverParams,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            nodes: 40,
            lag: None,
            lag_time: 0.4,
            clearance: 0.01,
            baseline_clearance: 0.15,
            visibility_margin: 0.03,
            goal_speed_cap: 0.0,
            occlusion_radius: 1.0,
            solver: SolverParams::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 {
            return Err(Error::InvalidParams(format!(
                "nodes must be at least 2, got {}",
                self.nodes
            )));
        }
        for (name, v) in [
            ("lag_time", self.lag_time),
            ("clearance", self.clearance),
            ("baseline_clearance", self.baseline_clearance),
            ("visibility_margin", self.visibility_margin),
            ("goal_speed_cap", self.goal_speed_cap),
            ("occlusion_radius", self.occlusion_radius),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be nonnegative, got {v}")));
            }
        }
        self.solver.validate()
    }
}

/// One planning query.
#[derive(Debug, Clone)]
pub struct PlanProblem {
    pub start: RobotState,
    pub goal: Vec2,
    pub goal_speed_cap: f64,
    pub belief: BeliefMap,
    pub nodes: usize,
    pub lag: usize,
    pub model: ModelParams,
    pub reactive: ReactiveSetModel,
    pub sensor: SensorParams,
    pub clearance: f64,
    pub baseline_clearance: f64,
    pub visibility_margin: f64,
    pub occlusion_radius: f64,
    /// Convex region already observed free, usable as a visibility witness.
    pub observed_region: Option<ConvexPolygon>,
    pub solver: SolverParams,
}

impl PlanProblem {
    /// Builds a problem, deriving the observed region from the belief and,
    /// if the config leaves it open, the lag from the initial guess.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        start: RobotState,
        goal: Vec2,
        belief: BeliefMap,
        model: ModelParams,
        reactive: ReactiveSetModel,
        sensor: SensorParams,
        config: &PlannerConfig,
    ) -> Result<Self> {
        config.validate()?;
        let observed_region = observed_region(&belief, start.position);
        let mut p = Self {
            start,
            goal,
            goal_speed_cap: config.goal_speed_cap,
            belief,
            nodes: config.nodes,
            lag: config.lag.unwrap_or(0),
            model,
            reactive,
            sensor,
            clearance: config.clearance,
            baseline_clearance: config.baseline_clearance,
            visibility_margin: config.visibility_margin,
            occlusion_radius: config.occlusion_radius,
            observed_region,
            solver: config.solver.clone(),
        };
        if config.lag.is_none() {
            let g = initial_guess(&p, None)?;
            let h = g.t_f / (p.nodes - 1) as f64;
            p.lag = ((config.lag_time / h).round() as usize).clamp(1, p.nodes / 2);
        }
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.reactive.validate()?;
        self.sensor.validate()?;
        self.solver.validate()?;
        if self.nodes < 2 || self.nodes < 2 * self.lag {
            return Err(Error::InvalidProblem(format!(
                "need K >= max(2, 2 lag), got K = {} and lag = {}",
                self.nodes, self.lag
            )));
        }
        if !self.start.within_limits(&self.model) {
            return Err(Error::InvalidProblem("start state violates speed limits".into()));
        }
        let b = &self.belief.bounds;
        for (name, p) in [("start", self.start.position), ("goal", self.goal)] {
            if !b.contains(p) {
                return Err(Error::InvalidProblem(format!("{name} lies outside the world bounds")));
            }
            if self.belief.in_known_obstacle(p) {
                return Err(Error::InvalidProblem(format!("{name} lies inside a known obstacle")));
            }
        }
        Ok(())
    }
}

/// Discretized trajectory: node states, node controls and final time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<RobotState>,
    pub controls: Vec<ControlInput>,
    pub t_f: f64,
}

impl Trajectory {
    pub fn step(&self) -> f64 {
        if self.states.len() < 2 {
            0.0
        } else {
            self.t_f / (self.states.len() - 1) as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.states.len()).map(|i| i as f64 * h).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
}

/// Per-node constraint margins of a solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeMargins {
    /// Smallest obstacle margin: separation of the reactive ellipse
    /// (secure) or point clearance minus its floor (baseline).
    pub obstacle: Option<f64>,
    /// Containment margin in the assigned witness, if any.
    pub visibility: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlpSolution {
    pub mode: Mode,
    pub states: Vec<RobotState>,
    pub controls: Vec<ControlInput>,
    pub t_f: f64,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    pub constraint_violation: f64,
    pub iterations: usize,
    pub lag: usize,
    pub witnesses: Vec<Option<Witness>>,
    pub margins: Vec<NodeMargins>,
}

impl NlpSolution {
    pub fn trajectory(&self) -> Trajectory {
        Trajectory {
            states: self.states.clone(),
            controls: self.controls.clone(),
            t_f: self.t_f,
        }
    }

    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// Converged, or stopped at the iteration limit on a point that meets
    /// every constraint to `tol`. Such a plan is safe though not optimal.
    pub fn executable(&self, tol: f64) -> bool {
        self.converged() || (self.status == SolveStatus::MaxIter && self.constraint_violation <= tol)
    }
}

/// Secure plan: reactive ellipses observed and clear of known obstacles.
pub fn plan(p: &PlanProblem, warm: Option<&Trajectory>) -> Result<NlpSolution> {
    solve_mode(p, Mode::Secure, warm)
}

/// Baseline plan: point robot with a clearance floor, no visibility.
pub fn plan_baseline(p: &PlanProblem, warm: Option<&Trajectory>) -> Result<NlpSolution> {
    solve_mode(p, Mode::Baseline, warm)
}

/// Row counts of the transcription built from the initial guess.
pub fn transcription_counts(p: &PlanProblem, mode: Mode) -> Result<Counts> {
    p.validate()?;
    let g = initial_guess(p, None)?;
    Ok(Transcription::new(p, mode, &g)?.counts)
}

fn solve_mode(p: &PlanProblem, mode: Mode, warm: Option<&Trajectory>) -> Result<NlpSolution> {
    p.validate()?;
    let guess = initial_guess(p, warm)?;
    let t = Transcription::new(p, mode, &guess)?;
    let z0 = t.pack(&guess);
    let out = sqp::solve(&t, z0, &p.solver)?;
    let traj = t.unpack(&out.z);
    let margins = t.node_margins(&out.z)?;
    Ok(NlpSolution {
        mode,
        states: traj.states,
        controls: traj.controls,
        t_f: traj.t_f,
        status: out.status,
        kkt_residual: out.kkt_residual,
        constraint_violation: out.violation,
        iterations: out.iterations,
        lag: t.lag,
        witnesses: t.witnesses.clone(),
        margins,
    })
}
