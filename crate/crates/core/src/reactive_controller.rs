//! Short-horizon evasive controller engaged when an unknown obstacle appears.
//!
//! Each call optimizes a horizon of bounded accelerations by projected
//! gradient descent on
//!
//! ```text
//! sum_k [ w_obs / (clearance(p_k, O) + 0.05) + w_anchor |p_k - anchor|^2
//!     + w_run (v_k^2 + omega_k^2) ]
//!     + w_speed (v_H^2 + omega_H^2)
//! ```
//!
//! over an explicit-Euler prediction, and returns the first control.

use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, ControlInput, ModelParams, RobotState};
use crate::error::{Error, Result};
use crate::geometry::{signed_distance_grad, ConvexPolygon, Vec2};

const CLEARANCE_OFFSET: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReactParams {
    pub horizon: usize,
    pub dt: f64,
    pub weight_obstacle: f64,
    pub weight_anchor: f64,
    pub weight_speed: f64,
    /// Per-step speed penalty; without it the optimizer may postpone braking.
    pub weight_running_speed: f64,
    pub rest_threshold: f64,
    pub max_iterations: usize,
    /// Integration substep used while executing a maneuver.
    pub substep: f64,
    pub time_cap: f64,
}

impl Default for ReactParams {
    fn default() -> Self {
        Self {
            horizon: 10,
            dt: 0.1,
            weight_obstacle: 1.0,
            weight_anchor: 4.0,
            weight_speed: 10.0,
            weight_running_speed: 1.0,
            rest_threshold: 1e-2,
            max_iterations: 100,
            substep: 0.02,
            time_cap: 10.0,
        }
    }
}

impl ReactParams {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::InvalidParams("controller horizon must be at least 2".into()));
        }
        if !(self.dt > 0.0 && self.substep > 0.0 && self.substep <= self.dt) {
            return Err(Error::InvalidParams(
                "controller steps must satisfy 0 < substep <= dt".into(),
            ));
        }
        for (name, w) in [
            ("weight_obstacle", self.weight_obstacle),
            ("weight_anchor", self.weight_anchor),
            ("weight_speed", self.weight_speed),
            ("weight_running_speed", self.weight_running_speed),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be nonnegative")));
            }
        }
        if !(self.rest_threshold > 0.0 && self.time_cap > 0.0) {
            return Err(Error::InvalidParams(
                "rest threshold and time cap must be positive".into(),
            ));
        }
        Ok(())
    }

    fn substeps(&self) -> usize {
        (self.dt / self.substep).round().max(1.0) as usize
    }
}

/// Result of one controller evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactOutput {
    pub control: ControlInput,
    /// Set when the inner optimization produced a non-finite iterate and the
    /// controller fell back to maximal braking.
    pub fallback: bool,
}

/// Controls that drive `(v, omega)` to zero as fast as the limits allow.
pub fn max_braking(x: &RobotState, model: &ModelParams) -> ControlInput {
    fn oppose(speed: f64, limit: f64) -> f64 {
        if speed > 0.0 {
            -limit
        } else if speed < 0.0 {
            limit
        } else {
            0.0
        }
    }
    ControlInput::new(
        oppose(x.linear_speed, model.a_max),
        oppose(x.angular_speed, model.alpha_max),
    )
}

struct Problem<'a> {
    x0: RobotState,
    anchor: Vec2,
    obstacle: &'a ConvexPolygon,
    rp: &'a ReactParams,
    model: &'a ModelParams,
}

impl Problem<'_> {
    fn rollout(&self, u: &[[f64; 2]]) -> Vec<[f64; 5]> {
        let dt = self.rp.dt;
        let mut s = [
            self.x0.position.x,
            self.x0.position.y,
            self.x0.heading,
            self.x0.linear_speed,
            self.x0.angular_speed,
        ];
        let mut out = Vec::with_capacity(u.len() + 1);
        out.push(s);
        for uk in u {
            let (sn, cs) = s[2].sin_cos();
            s = [
                s[0] + dt * s[3] * cs,
                s[1] + dt * s[3] * sn,
                s[2] + dt * s[4],
                (s[3] + dt * uk[0]).clamp(-self.model.v_max, self.model.v_max),
                (s[4] + dt * uk[1]).clamp(-self.model.omega_max, self.model.omega_max),
            ];
            out.push(s);
        }
        out
    }

    fn stage(&self, s: &[f64; 5]) -> (f64, [f64; 4]) {
        let p = Vec2::new(s[0], s[1]);
        let (d, grad_d) = signed_distance_grad(p, self.obstacle);
        let c = d.max(0.0) + CLEARANCE_OFFSET;
        let w = self.rp.weight_obstacle;
        let wr = self.rp.weight_running_speed;
        let dp = p - self.anchor;
        let value = w / c + self.rp.weight_anchor * dp.norm_squared() + wr * (s[3] * s[3] + s[4] * s[4]);
        let g = grad_d * (-w / (c * c)) + dp * (2.0 * self.rp.weight_anchor);
        (value, [g.x, g.y, 2.0 * wr * s[3], 2.0 * wr * s[4]])
    }

    fn cost(&self, u: &[[f64; 2]]) -> f64 {
        let traj = self.rollout(u);
        let mut j = 0.0;
        for s in &traj[1..] {
            j += self.stage(s).0;
        }
        let last = traj[traj.len() - 1];
        j + self.rp.weight_speed * (last[3] * last[3] + last[4] * last[4])
    }

    /// Cost and gradient by the discrete adjoint of the Euler rollout.
    fn cost_grad(&self, u: &[[f64; 2]]) -> (f64, Vec<[f64; 2]>) {
        let dt = self.rp.dt;
        let traj = self.rollout(u);
        let h = u.len();
        let mut j = 0.0;
        let mut lam = [0.0f64; 5];
        let last = traj[h];
        lam[3] = 2.0 * self.rp.weight_speed * last[3];
        lam[4] = 2.0 * self.rp.weight_speed * last[4];
        j += self.rp.weight_speed * (last[3] * last[3] + last[4] * last[4]);
        let mut grad = vec![[0.0; 2]; h];
        for k in (1..=h).rev() {
            let (l, gp) = self.stage(&traj[k]);
            j += l;
            lam[0] += gp[0];
            lam[1] += gp[1];
            lam[3] += gp[2];
            lam[4] += gp[3];
            // d/du_{k-1}: s_k = s_{k-1} + dt f(s_{k-1}, u_{k-1}).
            grad[k - 1] = [dt * lam[3], dt * lam[4]];
            // propagate to s_{k-1}
            let s = traj[k - 1];
            let (sn, cs) = s[2].sin_cos();
            let l0 = lam[0];
            let l1 = lam[1];
            let l2 = lam[2] + dt * s[3] * (-sn * l0 + cs * l1);
            let l3 = lam[3] + dt * (cs * l0 + sn * l1);
            let l4 = lam[4] + dt * lam[2];
            lam = [l0, l1, l2, l3, l4];
        }
        (j, grad)
    }

    fn project(&self, u: &mut [[f64; 2]]) {
        for uk in u.iter_mut() {
            uk[0] = uk[0].clamp(-self.model.a_max, self.model.a_max);
            uk[1] = uk[1].clamp(-self.model.alpha_max, self.model.alpha_max);
        }
    }

    fn braking_sequence(&self) -> Vec<[f64; 2]> {
        let dt = self.rp.dt;
        let mut v = self.x0.linear_speed;
        let mut w = self.x0.angular_speed;
        (0..self.rp.horizon)
            .map(|_| {
                let a = (-v / dt).clamp(-self.model.a_max, self.model.a_max);
                let b = (-w / dt).clamp(-self.model.alpha_max, self.model.alpha_max);
                v += a * dt;
                w += b * dt;
                [a, b]
            })
            .collect()
    }

    fn solve(&self, warm: Option<&[[f64; 2]]>) -> Vec<[f64; 2]> {
        let mut candidates = vec![self.braking_sequence(), vec![[0.0; 2]; self.rp.horizon]];
        if let Some(w) = warm.filter(|w| w.len() == self.rp.horizon) {
            candidates.push(w.to_vec());
        }
        let mut u = candidates
            .into_iter()
            .map(|mut c| {
                self.project(&mut c);
                let j = self.cost(&c);
                (j, c)
            })
            .fold(None::<(f64, Vec<[f64; 2]>)>, |best, cand| match best {
                Some(b) if b.0 <= cand.0 => Some(b),
                _ => Some(cand),
            })
            .map(|(_, c)| c)
            .expect("at least one candidate");

        let mut step = 0.1;
        for _ in 0..self.rp.max_iterations {
            let (j, g) = self.cost_grad(&u);
            let mut accepted = false;
            while step > 1e-10 {
                let mut trial: Vec<[f64; 2]> = u
                    .iter()
                    .zip(&g)
                    .map(|(uk, gk)| [uk[0] - step * gk[0], uk[1] - step * gk[1]])
                    .collect();
                self.project(&mut trial);
                let mut lin = 0.0;
                let mut dist2 = 0.0;
                for ((t, uk), gk) in trial.iter().zip(&u).zip(&g) {
                    for c in 0..2 {
                        let d = t[c] - uk[c];
                        lin += gk[c] * d;
                        dist2 += d * d;
                    }
                }
                if dist2 < 1e-18 {
                    return u;
                }
                let jt = self.cost(&trial);
                if jt <= j + lin + dist2 / (2.0 * step) {
                    u = trial;
                    accepted = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        u
    }
}

/// One evaluation of the evasive control law at `x`, anchored at the
/// detection state.
pub fn react_step(
    x: &RobotState,
    anchor: &RobotState,
    obstacle: &ConvexPolygon,
    rp: &ReactParams,
    model: &ModelParams,
) -> ReactOutput {
    react_step_warm(x, anchor, obstacle, rp, model, None).0
}

fn react_step_warm(
    x: &RobotState,
    anchor: &RobotState,
    obstacle: &ConvexPolygon,
    rp: &ReactParams,
    model: &ModelParams,
    warm: Option<&[[f64; 2]]>,
) -> (ReactOutput, Vec<[f64; 2]>) {
    let problem = Problem {
        x0: *x,
        anchor: anchor.position,
        obstacle,
        rp,
        model,
    };
    let seq = problem.solve(warm);
    let first = seq[0];
    if !(first[0].is_finite() && first[1].is_finite()) {
        return (
            ReactOutput {
                control: max_braking(x, model),
                fallback: true,
            },
            Vec::new(),
        );
    }
    let control = ControlInput::new(first[0], first[1]).clamped(model);
    let mut shifted: Vec<[f64; 2]> = seq[1..].to_vec();
    shifted.push(*seq.last().expect("nonempty horizon"));
    (
        ReactOutput {
            control,
            fallback: false,
        },
        shifted,
    )
}

/// Stateful wrapper that carries the shifted control sequence between calls.
#[derive(Debug, Clone)]
pub struct ReactiveController {
    anchor: RobotState,
    obstacle: ConvexPolygon,
    params: ReactParams,
    model: ModelParams,
    warm: Vec<[f64; 2]>,
    pub fallbacks: usize,
}

impl ReactiveController {
    pub fn new(anchor: RobotState, obstacle: ConvexPolygon, params: ReactParams, model: ModelParams) -> Self {
        Self {
            anchor,
            obstacle,
            params,
            model,
            warm: Vec::new(),
            fallbacks: 0,
        }
    }

    pub fn step(&mut self, x: &RobotState) -> ControlInput {
        let warm = (!self.warm.is_empty()).then_some(self.warm.as_slice());
        let (out, next) = react_step_warm(x, &self.anchor, &self.obstacle, &self.params, &self.model, warm);
        self.warm = next;
        if out.fallback {
            self.fallbacks += 1;
        }
        out.control
    }

    pub fn at_rest(&self, x: &RobotState) -> bool {
        x.speed_norm() < self.params.rest_threshold
    }
}

/// Executes the evasive maneuver from `x0` until the robot is at rest.
/// Controls are held for `rp.dt` and integrated in `rp.substep` increments;
/// every substep state is part of the returned path.
pub fn run_maneuver(
    x0: &RobotState,
    obstacle: &ConvexPolygon,
    rp: &ReactParams,
    model: &ModelParams,
) -> Result<Vec<RobotState>> {
    let mut ctl = ReactiveController::new(*x0, obstacle.clone(), *rp, *model);
    let mut path = vec![*x0];
    let mut x = *x0;
    let sub = rp.substeps();
    let h = rp.dt / sub as f64;
    let mut t = 0.0;
    while !ctl.at_rest(&x) {
        if t >= rp.time_cap - 1e-9 {
            return Err(Error::NonConvergentManeuver { time_cap: rp.time_cap });
        }
        let u = ctl.step(&x);
        for _ in 0..sub {
            x = integrate(&x, &u, h, model);
            path.push(x);
            if ctl.at_rest(&x) {
                break;
            }
        }
        t += rp.dt;
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::stopping_interval_1d;

    fn wall_ahead(distance: f64) -> ConvexPolygon {
        ConvexPolygon::rectangle(Vec2::new(distance, -2.0), Vec2::new(distance + 0.1, 2.0)).unwrap()
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let model = ModelParams::default();
        let rp = ReactParams::default();
        let obstacle = wall_ahead(1.0);
        let p = Problem {
            x0: RobotState::new(0.0, 0.1, 0.2, 0.8, 0.3),
            anchor: Vec2::new(0.0, 0.1),
            obstacle: &obstacle,
            rp: &rp,
            model: &model,
        };
        let u: Vec<[f64; 2]> = (0..rp.horizon)
            .map(|k| [0.1 * k as f64 - 0.5, 0.3 - 0.05 * k as f64])
            .collect();
        let (_, g) = p.cost_grad(&u);
        for k in 0..rp.horizon {
            for c in 0..2 {
                let mut up = u.clone();
                let mut um = u.clone();
                up[k][c] += 1e-6;
                um[k][c] -= 1e-6;
                let fd = (p.cost(&up) - p.cost(&um)) / 2e-6;
                assert!(
                    (fd - g[k][c]).abs() <= 1e-5 * (1.0 + fd.abs()),
                    "k={k} c={c} fd={fd} g={}",
                    g[k][c]
                );
            }
        }
    }

    #[test]
    fn at_rest_far_obstacle_gives_near_zero_control() {
        let model = ModelParams::default();
        let x = RobotState::new(0.0, 0.0, 0.0, 0.0, 0.0);
        let out = react_step(&x, &x, &wall_ahead(100.0), &ReactParams::default(), &model);
        let u = out.control;
        assert!(u.linear_accel.hypot(u.angular_accel) <= 1e-3, "{u:?}");
    }

    #[test]
    fn brakes_hard_toward_wall() {
        let model = ModelParams::default();
        let x = RobotState::new(0.0, 0.0, 0.0, 1.0, 0.0);
        let out = react_step(&x, &x, &wall_ahead(1.0), &ReactParams::default(), &model);
        assert!(!out.fallback);
        assert!(out.control.linear_accel <= -0.9 * model.a_max, "{:?}", out.control);
    }

    #[test]
    fn maneuver_from_rest_is_single_point() {
        let model = ModelParams::default();
        let x = RobotState::new(1.0, 2.0, 0.3, 0.0, 0.0);
        let path = run_maneuver(&x, &wall_ahead(3.0), &ReactParams::default(), &model).unwrap();
        assert_eq!(path, vec![x]);
    }

    #[test]
    fn stops_before_wall() {
        let model = ModelParams::default();
        let rp = ReactParams::default();
        let x = RobotState::new(0.0, 0.0, 0.0, 1.0, 0.0);
        let wall = wall_ahead(1.0);
        let path = run_maneuver(&x, &wall, &rp, &model).unwrap();
        let last = path.last().unwrap();
        assert!(last.speed_norm() < rp.rest_threshold);
        let (_, stop) = stopping_interval_1d(0.0, 1.0, model.a_max);
        let reach = path.iter().map(|s| s.position.x).fold(f64::MIN, f64::max);
        assert!(reach >= stop - 1e-3, "reach {reach}");
        assert!(reach <= 2.0 * stop, "reach {reach}");
        let clearance = path
            .iter()
            .map(|s| crate::geometry::point_polygon_distance(s.position, &wall))
            .fold(f64::INFINITY, f64::min);
        assert!(clearance > 0.4, "clearance {clearance}");
    }

    #[test]
    fn controls_stay_admissible() {
        let model = ModelParams::default();
        let rp = ReactParams::default();
        let wall = wall_ahead(0.4);
        let mut ctl = ReactiveController::new(RobotState::new(0.0, 0.0, 0.0, 1.5, 1.0), wall, rp, model);
        let mut x = RobotState::new(0.0, 0.0, 0.0, 1.5, 1.0);
        for _ in 0..30 {
            let u = ctl.step(&x);
            assert!(u.within_limits(&model));
            x = integrate(&x, &u, rp.dt, &model);
        }
    }
}
