//! Initial guesses: grid search plus a trapezoidal speed profile, or a
//! resampled previous solution.

use pathfinding::prelude::astar;

use crate::dynamics::{ControlInput, RobotState};
use crate::error::{Error, Result};
use crate::geometry::{point_polygon_distance, ConvexPolygon, Vec2};
use crate::sensor::{Bounds, Grid};

use super::{PlanProblem, Trajectory};

/// Fraction of `v_max` and `a_max` used by the guess profile.
const CRUISE_FRACTION: f64 = 0.5;

fn clearance(p: Vec2, obstacles: &[ConvexPolygon]) -> f64 {
    obstacles
        .iter()
        .map(|o| point_polygon_distance(p, o))
        .fold(f64::INFINITY, f64::min)
}

fn segment_clear(a: Vec2, b: Vec2, obstacles: &[ConvexPolygon], radius: f64, spacing: f64) -> bool {
    let n = (((b - a).norm() / spacing).ceil() as usize).max(1);
    (1..=n).all(|s| clearance(a + (b - a) * (s as f64 / n as f64), obstacles) >= radius)
}

/// Shortest 8-connected grid path from `start` to `goal` keeping cell
/// centers at least `radius` from every obstacle, shortcut by line of sight.
/// The returned polyline starts at `start` and ends at `goal`.
pub fn grid_path(
    bounds: &Bounds,
    obstacles: &[ConvexPolygon],
    cell: f64,
    start: Vec2,
    goal: Vec2,
    radius: f64,
) -> Result<Vec<Vec2>> {
    let grid = Grid::new(bounds, cell)?;
    let (Some(s), Some(g)) = (grid.index_of(start), grid.index_of(goal)) else {
        return Err(Error::InfeasibleScenario("start or goal outside the grid".into()));
    };
    let blocked: Vec<bool> = (0..grid.len())
        .map(|i| i != s && i != g && clearance(grid.center(i), obstacles) < radius)
        .collect();
    let (nx, ny) = (grid.nx as i64, grid.ny as i64);
    let goal_c = grid.center(g);
    let units = |d: Vec2| (d.norm() * 1000.0 / cell).round() as u64;
    let successors = |&i: &usize| {
        let (ix, iy) = ((i as i64) % nx, (i as i64) / nx);
        let mut out = Vec::with_capacity(8);
        for (dx, dy) in [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)] {
            let (jx, jy) = (ix + dx, iy + dy);
            if jx < 0 || jy < 0 || jx >= nx || jy >= ny {
                continue;
            }
            let j = (jy * nx + jx) as usize;
            if !blocked[j] {
                out.push((j, if dx != 0 && dy != 0 { 1414 } else { 1000 }));
            }
        }
        out
    };
    let (cells, _) = astar(&s, successors, |&i| units(grid.center(i) - goal_c), |&i| i == g)
        .ok_or_else(|| Error::InfeasibleScenario(format!("no grid path from {start:?} to {goal:?}")))?;

    let mut raw = vec![start];
    raw.extend(
        cells
            .iter()
            .skip(1)
            .take(cells.len().saturating_sub(2))
            .map(|&i| grid.center(i)),
    );
    raw.push(goal);
    let mut path = vec![start];
    let mut anchor = 0;
    while anchor + 1 < raw.len() {
        let mut next = anchor + 1;
        for j in (anchor + 2..raw.len()).rev() {
            if segment_clear(raw[anchor], raw[j], obstacles, radius, 0.5 * cell) {
                next = j;
                break;
            }
        }
        path.push(raw[next]);
        anchor = next;
    }
    Ok(path)
}

/// Speed phases `(duration, start speed, acceleration)` covering `length`
/// from speed `v0` to rest.
fn speed_profile(length: f64, v0: f64, cruise: f64, accel: f64) -> Vec<(f64, f64, f64)> {
    if length <= 1e-9 {
        return vec![(v0 / accel, v0, -accel)];
    }
    let brake = v0 * v0 / (2.0 * accel);
    if brake >= length {
        let a = v0 * v0 / (2.0 * length);
        return vec![(v0 / a, v0, -a)];
    }
    let reach = |vp: f64| (vp * vp - v0 * v0).abs() / (2.0 * accel) + vp * vp / (2.0 * accel);
    let mut phases = Vec::new();
    let vp = if v0 > cruise || reach(cruise) <= length {
        cruise
    } else {
        ((2.0 * accel * length + v0 * v0) / 2.0).sqrt()
    };
    if (vp - v0).abs() > 1e-12 {
        let a = if vp > v0 { accel } else { -accel };
        phases.push(((vp - v0).abs() / accel, v0, a));
    }
    let d1 = (vp * vp - v0 * v0).abs() / (2.0 * accel);
    let d3 = vp * vp / (2.0 * accel);
    let d2 = (length - d1 - d3).max(0.0);
    if vp > 0.0 && d2 > 0.0 {
        phases.push((d2 / vp, vp, 0.0));
    }
    phases.push((vp / accel, vp, -accel));
    phases
}

/// Distance and speed after `t` seconds of the profile.
fn profile_at(phases: &[(f64, f64, f64)], mut t: f64) -> (f64, f64) {
    let mut s = 0.0;
    let mut v = phases.first().map_or(0.0, |p| p.1);
    for &(dur, v_start, a) in phases {
        let tau = t.min(dur).max(0.0);
        s += v_start * tau + 0.5 * a * tau * tau;
        v = v_start + a * tau;
        t -= dur;
        if t <= 0.0 {
            break;
        }
    }
    (s, v.max(0.0))
}

fn point_along(path: &[Vec2], s: f64) -> (Vec2, Vec2) {
    let mut rest = s.max(0.0);
    for w in path.windows(2) {
        let seg = w[1] - w[0];
        let len = seg.norm();
        if len <= 1e-12 {
            continue;
        }
        if rest <= len {
            return (w[0] + seg * (rest / len), seg / len);
        }
        rest -= len;
    }
    let last = *path.last().expect("path has at least one point");
    let dir = path
        .windows(2)
        .rev()
        .map(|w| w[1] - w[0])
        .find(|d| d.norm() > 1e-12)
        .map_or(Vec2::new(1.0, 0.0), |d| d.normalize());
    (last, dir)
}

fn unwrap_near(angle: f64, reference: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    angle - two_pi * ((angle - reference) / two_pi).round()
}

/// Time-parameterizes `path` on `k` uniformly spaced nodes.
fn parameterize(p: &PlanProblem, path: &[Vec2], k: usize) -> Trajectory {
    let length: f64 = path.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    let v_cap = p.model.v_max.min(p.reactive.v_max);
    let w_cap = p.model.omega_max.min(p.reactive.omega_max);
    let v0 = p.start.linear_speed.max(0.0);
    let phases = speed_profile(length, v0, CRUISE_FRACTION * v_cap, CRUISE_FRACTION * p.model.a_max);
    let t_f = phases.iter().map(|ph| ph.0).sum::<f64>().max(0.1);
    let h = t_f / (k - 1) as f64;
    let mut states = Vec::with_capacity(k);
    let mut heading = p.start.heading;
    for i in 0..k {
        let (s, v) = profile_at(&phases, i as f64 * h);
        let (pos, dir) = point_along(path, s);
        if i > 0 {
            heading = unwrap_near(dir.y.atan2(dir.x), heading);
        }
        states.push(RobotState::new(pos.x, pos.y, heading, v.min(v_cap), 0.0));
    }
    states[0] = p.start;
    states[k - 1].linear_speed = 0.0;
    for i in 1..k - 1 {
        let w = (states[i + 1].heading - states[i - 1].heading) / (2.0 * h);
        states[i].angular_speed = w.clamp(-w_cap, w_cap);
    }
    let controls = (0..k)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(k - 1));
            let dt = (b - a) as f64 * h;
            let acc = (states[b].linear_speed - states[a].linear_speed) / dt;
            let alpha = (states[b].angular_speed - states[a].angular_speed) / dt;
            ControlInput::new(acc, alpha).clamped(&p.model)
        })
        .collect();
    Trajectory { states, controls, t_f }
}

/// Samples `traj` from `from_time` to its end on `k` uniform nodes.
pub fn resample(traj: &Trajectory, from_time: f64, k: usize) -> Trajectory {
    let n = traj.states.len();
    if n == k && from_time <= 0.0 {
        return traj.clone();
    }
    let h = traj.step();
    let start = from_time.clamp(0.0, traj.t_f);
    let t_f = (traj.t_f - start).max(0.1);
    let span = traj.t_f - start;
    let mut states = Vec::with_capacity(k);
    let mut controls = Vec::with_capacity(k);
    for i in 0..k {
        let t = start + span * i as f64 / (k - 1).max(1) as f64;
        let u = if h > 0.0 { t / h } else { 0.0 };
        let j = (u.floor() as usize).min(n.saturating_sub(2));
        let frac = (u - j as f64).clamp(0.0, 1.0);
        let (a, b) = (j, (j + 1).min(n - 1));
        let x = traj.states[a].to_vector() * (1.0 - frac) + traj.states[b].to_vector() * frac;
        let c = traj.controls[a].to_vector() * (1.0 - frac) + traj.controls[b].to_vector() * frac;
        states.push(RobotState::from_vector(&x));
        controls.push(ControlInput::new(c[0], c[1]));
    }
    Trajectory { states, controls, t_f }
}

/// Initial guess for `p`: the resampled warm start if given, else a grid
/// path time-parameterized at half the speed and acceleration limits.
pub fn initial_guess(p: &PlanProblem, warm: Option<&Trajectory>) -> Result<Trajectory> {
    let k = p.nodes;
    if let Some(w) = warm {
        if w.states.is_empty() || w.states.len() != w.controls.len() {
            return Err(Error::InvalidProblem("warm start has mismatched node arrays".into()));
        }
        let mut g = resample(w, 0.0, k);
        g.states[0] = p.start;
        return Ok(g);
    }
    let radius = p.reactive.floor + p.clearance;
    let path = grid_path(
        &p.belief.bounds,
        &p.belief.known_obstacles,
        p.belief.observed_free.cell,
        p.start.position,
        p.goal,
        radius,
    )?;
    Ok(parameterize(p, &path, k))
}
