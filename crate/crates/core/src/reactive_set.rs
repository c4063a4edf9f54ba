//! State-dependent ellipsoidal bound on where the evasive controller can
//! take the robot.
//!
//! The set is built offline: for a grid of initial speeds the controller is
//! run against a family of walls, the resulting paths are enclosed per grid
//! point, and smooth polynomials in `(v, omega)` are fitted to the enclosing
//! ellipses. In the body frame the model is
//!
//! ```text
//! center = a(v, omega)
//! semi_k = sqrt(floor^2 + (inflation * g_k(v, omega))^2)
//! ```
//!
//! so `Q = diag(semi_k^2)` is diagonal and positive definite everywhere.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelParams, RobotState, STATE_DIM};
use crate::error::{Error, Result};
use crate::geometry::{
    convex_hull, minimum_enclosing_ellipsoid, rotation, rotation_derivative, segment_crosses_interior, ConvexPolygon,
    Ellipsoid, Mat2, Vec2,
};
use crate::qp::QpProblem;
use crate::reactive_controller::{run_maneuver, ReactParams};
use crate::sensor::SensorParams;

/// Speed norm below which a calibration maneuver counts as finished.
pub const CALIBRATION_REST: f64 = 1e-3;

/// Tolerance on the calibrated speed range before `evaluate` refuses.
const RANGE_TOL: f64 = 1e-5;

const EVEN_TERMS: usize = 6;

/// Speed scale of the onset term.
const ONSET_SCALE: f64 = 0.1;
const ODD_TERMS: usize = 3;

/// Smooth step from 0 at rest to 1 once the robot moves at all. The
/// controller displaces the robot by a roughly speed-independent amount as
/// soon as a maneuver runs, which no polynomial vanishing at rest captures.
fn onset(v: f64, w: f64) -> f64 {
    -(-(v * v + w * w) / (ONSET_SCALE * ONSET_SCALE)).exp_m1()
}

/// `[onset, v, v^2, omega^2, v omega^2, v^2 omega^2]`; vanishes at rest and
/// is nondecreasing in `v >= 0`.
fn even_basis(v: f64, w: f64) -> [f64; EVEN_TERMS] {
    let w2 = w * w;
    [onset(v, w), v, v * v, w2, v * w2, v * v * w2]
}

fn onset_slope(v: f64, w: f64) -> f64 {
    2.0 * (-(v * v + w * w) / (ONSET_SCALE * ONSET_SCALE)).exp() / (ONSET_SCALE * ONSET_SCALE)
}

fn even_basis_dv(v: f64, w: f64) -> [f64; EVEN_TERMS] {
    let w2 = w * w;
    [v * onset_slope(v, w), 1.0, 2.0 * v, 0.0, w2, 2.0 * v * w2]
}

fn even_basis_dw(v: f64, w: f64) -> [f64; EVEN_TERMS] {
    [w * onset_slope(v, w), 0.0, 0.0, 2.0 * w, 2.0 * v * w, 2.0 * v * v * w]
}

/// `[omega, v omega, v^2 omega]`; odd in `omega`.
fn odd_basis(v: f64, w: f64) -> [f64; ODD_TERMS] {
    [w, v * w, v * v * w]
}

fn odd_basis_dv(v: f64, w: f64) -> [f64; ODD_TERMS] {
    [0.0, w, 2.0 * v * w]
}

fn odd_basis_dw(v: f64, _w: f64) -> [f64; ODD_TERMS] {
    [1.0, v, v * v]
}

fn dot<const N: usize>(c: &[f64; N], b: [f64; N]) -> f64 {
    c.iter().zip(b).map(|(c, b)| c * b).sum()
}

/// Body-frame center offset `a(v, omega)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetCoeffs {
    /// Along the heading, on the even basis.
    pub forward: [f64; EVEN_TERMS],
    /// To the left of the heading, on the odd basis.
    pub lateral: [f64; ODD_TERMS],
}

/// Nonnegative coefficients of the uninflated semi-axis growth `g_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeCoeffs {
    pub forward: [f64; EVEN_TERMS],
    pub lateral: [f64; EVEN_TERMS],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactiveSetModel {
    pub v_max: f64,
    pub omega_max: f64,
    /// Semi-axis length at rest (m).
    pub floor: f64,
    pub offset_coeffs: OffsetCoeffs,
    pub shape_coeffs: ShapeCoeffs,
    pub inflation: f64,
}

/// Derivatives of the evaluated ellipsoid with respect to the state vector
/// `(x, y, heading, v, omega)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidJacobian {
    pub d_center: [Vec2; STATE_DIM],
    pub d_shape: [Mat2; STATE_DIM],
}

impl ReactiveSetModel {
    pub fn validate(&self) -> Result<()> {
        let finite = self
            .offset_coeffs
            .forward
            .iter()
            .chain(&self.offset_coeffs.lateral)
            .chain(&self.shape_coeffs.forward)
            .chain(&self.shape_coeffs.lateral)
            .all(|c| c.is_finite());
        if !finite {
            return Err(Error::InvalidParams("reactive-set coefficients must be finite".into()));
        }
        if self
            .shape_coeffs
            .forward
            .iter()
            .chain(&self.shape_coeffs.lateral)
            .any(|&c| c < 0.0)
        {
            return Err(Error::InvalidParams("shape coefficients must be nonnegative".into()));
        }
        if !(self.floor > 0.0 && self.v_max > 0.0 && self.omega_max > 0.0) {
            return Err(Error::InvalidParams("floor and speed range must be positive".into()));
        }
        if !(self.inflation >= 1.0 && self.inflation.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "inflation must be >= 1, got {}",
                self.inflation
            )));
        }
        Ok(())
    }

    fn clamp_speeds(&self, v: f64, w: f64) -> Result<(f64, f64)> {
        let v_ok = (-RANGE_TOL..=self.v_max + RANGE_TOL).contains(&v);
        let w_ok = w.abs() <= self.omega_max + RANGE_TOL;
        if !(v_ok && w_ok) {
            return Err(Error::Extrapolation(format!(
                "(v, omega) = ({v}, {w}) outside [0, {}] x [-{m}, {m}]",
                self.v_max,
                m = self.omega_max
            )));
        }
        Ok((v.clamp(0.0, self.v_max), w.clamp(-self.omega_max, self.omega_max)))
    }

    fn growth(&self, v: f64, w: f64) -> [f64; 2] {
        let b = even_basis(v, w);
        [dot(&self.shape_coeffs.forward, b), dot(&self.shape_coeffs.lateral, b)]
    }

    fn semi_from_growth(&self, g: f64) -> f64 {
        self.floor.hypot(self.inflation * g)
    }

    /// Body-frame center offset and semi-axes at the given speeds.
    pub fn body_ellipse(&self, v: f64, w: f64) -> Result<(Vec2, [f64; 2])> {
        let (v, w) = self.clamp_speeds(v, w)?;
        let a = Vec2::new(
            dot(&self.offset_coeffs.forward, even_basis(v, w)),
            dot(&self.offset_coeffs.lateral, odd_basis(v, w)),
        );
        let g = self.growth(v, w);
        Ok((a, [self.semi_from_growth(g[0]), self.semi_from_growth(g[1])]))
    }

    /// World-frame reactive set at `x`.
    pub fn evaluate(&self, x: &RobotState) -> Result<Ellipsoid> {
        let (a, semi) = self.body_ellipse(x.linear_speed, x.angular_speed)?;
        let r = rotation(x.heading);
        Ellipsoid::new(
            x.position + r * a,
            r * Mat2::from_diagonal(&Vec2::new(semi[0], semi[1])),
        )
    }

    pub fn evaluate_with_jacobian(&self, x: &RobotState) -> Result<(Ellipsoid, EllipsoidJacobian)> {
        let e = self.evaluate(x)?;
        let (v, w) = self.clamp_speeds(x.linear_speed, x.angular_speed)?;
        let (a, semi) = self.body_ellipse(v, w)?;
        let r = rotation(x.heading);
        let dr = rotation_derivative(x.heading);
        let d = Mat2::from_diagonal(&Vec2::new(semi[0], semi[1]));

        let da_dv = Vec2::new(
            dot(&self.offset_coeffs.forward, even_basis_dv(v, w)),
            dot(&self.offset_coeffs.lateral, odd_basis_dv(v, w)),
        );
        let da_dw = Vec2::new(
            dot(&self.offset_coeffs.forward, even_basis_dw(v, w)),
            dot(&self.offset_coeffs.lateral, odd_basis_dw(v, w)),
        );
        let g = self.growth(v, w);
        let dsemi = |basis: [f64; EVEN_TERMS]| -> Vec2 {
            let dg = [
                dot(&self.shape_coeffs.forward, basis),
                dot(&self.shape_coeffs.lateral, basis),
            ];
            let k2 = self.inflation * self.inflation;
            Vec2::new(k2 * g[0] * dg[0] / semi[0], k2 * g[1] * dg[1] / semi[1])
        };
        let ds_dv = dsemi(even_basis_dv(v, w));
        let ds_dw = dsemi(even_basis_dw(v, w));

        let jac = EllipsoidJacobian {
            d_center: [Vec2::x(), Vec2::y(), dr * a, r * da_dv, r * da_dw],
            d_shape: [
                Mat2::zeros(),
                Mat2::zeros(),
                dr * d,
                r * Mat2::from_diagonal(&ds_dv),
                r * Mat2::from_diagonal(&ds_dw),
            ],
        };
        Ok((e, jac))
    }

    /// Largest distance ahead of the robot reached by the set at speed
    /// `(v, omega)`, measured along the heading.
    pub fn forward_reach(&self, v: f64, w: f64) -> Result<f64> {
        let (a, semi) = self.body_ellipse(v, w)?;
        Ok(a.x + semi[0])
    }
}

/// Offline calibration settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub speed_samples: usize,
    pub turn_samples: usize,
    /// Number of wall directions, spread evenly across the field of view.
    pub wall_angles: usize,
    /// Wall distances as fractions of the field-of-view depth along each
    /// direction.
    pub wall_offsets: Vec<f64>,
    pub wall_length: f64,
    pub wall_thickness: f64,
    /// Walls are never placed closer than the straight-line stopping
    /// distance plus this gap.
    pub stop_gap: f64,
    pub floor: f64,
    pub inflation: f64,
    pub mvee_tol: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            speed_samples: 9,
            turn_samples: 9,
            wall_angles: 16,
            wall_offsets: vec![0.9, 0.98],
            wall_length: 4.0,
            wall_thickness: 0.1,
            stop_gap: 0.1,
            floor: 0.05,
            inflation: 1.1,
            mvee_tol: 1e-7,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.speed_samples < 3 || self.turn_samples < 3 {
            return Err(Error::InvalidParams(
                "calibration grid needs at least 3 samples per axis".into(),
            ));
        }
        if self.turn_samples.is_multiple_of(2) {
            return Err(Error::InvalidParams(
                "turn_samples must be odd so omega = 0 is on the grid".into(),
            ));
        }
        if self.wall_angles < 2 || self.wall_offsets.is_empty() {
            return Err(Error::InvalidParams("obstacle family is empty".into()));
        }
        if self.wall_offsets.iter().any(|&o| !(o > 0.0)) {
            return Err(Error::InvalidParams("wall offsets must be positive".into()));
        }
        if !(self.wall_length > 0.0 && self.wall_thickness > 0.0 && self.stop_gap >= 0.0) {
            return Err(Error::InvalidParams("wall dimensions must be positive".into()));
        }
        if !(self.floor > 0.0 && self.inflation >= 1.0 && self.mvee_tol > 0.0) {
            return Err(Error::InvalidParams(
                "floor, inflation and tolerance out of range".into(),
            ));
        }
        Ok(())
    }

    /// The `(v, omega)` grid covering `[0, v_max] x [-omega_max, omega_max]`.
    pub fn grid(&self, model: &ModelParams) -> Vec<(f64, f64)> {
        let nv = self.speed_samples;
        let nw = self.turn_samples;
        let mut out = Vec::with_capacity(nv * nw);
        for i in 0..nv {
            let v = model.v_max * i as f64 / (nv - 1) as f64;
            for j in 0..nw {
                let w = model.omega_max * (2.0 * j as f64 / (nw - 1) as f64 - 1.0);
                out.push((v, w));
            }
        }
        out
    }

    /// Walls in the body frame of a robot at the origin moving at speed `v`.
    pub fn family(&self, v: f64, model: &ModelParams, sensor: &SensorParams) -> Vec<ConvexPolygon> {
        let depth = sensor.range * sensor.half_angle.cos();
        let stop = v * v / (2.0 * model.a_max) + self.stop_gap;
        let mut out = Vec::with_capacity(self.wall_angles * self.wall_offsets.len());
        for k in 0..self.wall_angles {
            let frac = k as f64 / (self.wall_angles - 1) as f64;
            let phi = sensor.half_angle * (2.0 * frac - 1.0);
            for &off in &self.wall_offsets {
                let d = (off * depth / phi.cos()).max(stop);
                let local = ConvexPolygon::rectangle(
                    Vec2::new(d, -0.5 * self.wall_length),
                    Vec2::new(d + self.wall_thickness, 0.5 * self.wall_length),
                )
                .expect("wall dimensions validated");
                out.push(local.transformed(phi, Vec2::zeros()));
            }
        }
        out
    }
}

/// Runs the evasive controller from `x0` against each obstacle in turn.
/// Maneuvers end once the speed norm drops below [`CALIBRATION_REST`].
pub fn simulate_reactive_paths(
    x0: &RobotState,
    family: &[ConvexPolygon],
    rp: &ReactParams,
    model: &ModelParams,
) -> Result<Vec<Vec<RobotState>>> {
    let mut rp = *rp;
    rp.rest_threshold = rp.rest_threshold.min(CALIBRATION_REST);
    family
        .iter()
        .map(|o| {
            let path = run_maneuver(x0, o, &rp, model).map_err(|e| match e {
                Error::NonConvergentManeuver { time_cap } => {
                    Error::CalibrationFailure(format!("maneuver from {x0:?} did not stop within {time_cap} s"))
                }
                other => other,
            })?;
            let hit = path
                .windows(2)
                .any(|w| o.contains(w[1].position) || segment_crosses_interior(w[0].position, w[1].position, o));
            if hit {
                return Err(Error::CalibrationFailure(format!(
                    "maneuver from {x0:?} collides with its triggering obstacle"
                )));
            }
            Ok(path)
        })
        .collect()
}

/// Calibration evidence for one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSample {
    pub v: f64,
    pub omega: f64,
    /// Minimum-volume ellipse around the paths, each point dilated by the floor.
    pub mvee_center: [f64; 2],
    pub mvee_shape: [[f64; 2]; 2],
    /// Body-axis-aligned semi-axes of the smallest ellipse about the fitted
    /// center containing the raw points.
    pub axis_target: [f64; 2],
    pub path_points: usize,
    /// Largest normalized radius of a raw point in the final model.
    pub worst_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub samples: Vec<GridSample>,
    pub paths: usize,
    pub points_total: usize,
    pub points_contained: usize,
    /// Positive means a point lies outside; meters, approximated by
    /// `(radius - 1) * smallest semi-axis`.
    pub max_violation: f64,
    /// Smallest inflation that contains every raw point.
    pub exact_inflation: f64,
    /// RMS fit residual divided by the mean target axis length.
    pub relative_residual: f64,
}

struct RawSample {
    v: f64,
    w: f64,
    points: Vec<Vec2>,
    hull: Vec<Vec2>,
    mvee: Ellipsoid,
}

/// Semi-axes of the smallest-area ellipse with axes along x and y, centered
/// at the origin, containing `points`.
fn aligned_enclosing_axes(points: &[Vec2]) -> [f64; 2] {
    let sx = points.iter().map(|p| p.x * p.x).fold(0.0, f64::max);
    let sy = points.iter().map(|p| p.y * p.y).fold(0.0, f64::max);
    if sx <= 1e-24 || sy <= 1e-24 {
        return [sx.sqrt(), sy.sqrt()];
    }
    // Feasible set {(alpha, beta) >= 0 : alpha x^2 + beta y^2 <= 1}; maximize
    // alpha * beta along rays, which is unimodal in the ray angle.
    let score = |t: f64| -> (f64, f64, f64) {
        let (c, s) = (t.cos(), t.sin());
        let m = points.iter().map(|p| c * p.x * p.x + s * p.y * p.y).fold(0.0, f64::max);
        let (al, be) = (c / m, s / m);
        (al.ln() + be.ln(), al, be)
    };
    let (lo0, hi0) = (1e-9, PI / 2.0 - 1e-9);
    let n = 64;
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for i in 0..=n {
        let t = lo0 + (hi0 - lo0) * i as f64 / n as f64;
        let s = score(t).0;
        if s > best_val {
            best_val = s;
            best = i;
        }
    }
    let step = (hi0 - lo0) / n as f64;
    let mut lo = (lo0 + step * (best as f64 - 1.0)).max(lo0);
    let mut hi = (lo0 + step * (best as f64 + 1.0)).min(hi0);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if score(a).0 < score(b).0 {
            lo = a;
        } else {
            hi = b;
        }
    }
    let (_, al, be) = score(0.5 * (lo + hi));
    [1.0 / al.sqrt(), 1.0 / be.sqrt()]
}

fn sample_grid_point(
    v: f64,
    w: f64,
    config: &CalibrationConfig,
    rp: &ReactParams,
    model: &ModelParams,
    sensor: &SensorParams,
) -> Result<RawSample> {
    let x0 = RobotState::new(0.0, 0.0, 0.0, v, w);
    let family = config.family(v, model, sensor);
    let paths = simulate_reactive_paths(&x0, &family, rp, model)?;
    let points: Vec<Vec2> = paths.iter().flatten().map(|s| s.position).collect();
    let hull = convex_hull(&points);
    let dilated: Vec<Vec2> = hull
        .iter()
        .flat_map(|p| {
            (0..8).map(move |k| {
                let t = PI * k as f64 / 4.0;
                p + config.floor * Vec2::new(t.cos(), t.sin())
            })
        })
        .collect();
    let mvee = minimum_enclosing_ellipsoid(&convex_hull(&dilated), config.mvee_tol)?;
    Ok(RawSample {
        v,
        w,
        points,
        hull,
        mvee,
    })
}

/// Unconstrained least squares.
fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.clone()
        .svd(true, true)
        .solve(b, 1e-12)
        .expect("svd computed with both factors")
}

/// Least squares over nonnegative coefficients with the fit held at or
/// above every target: `min |Ag - t|^2` s.t. `Ag >= t`, `g >= 0`.
fn envelope_fit(a: &DMatrix<f64>, t: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.ncols();
    let ata = a.transpose() * a;
    let att = a.transpose() * t;
    let mut qp = QpProblem::new(n);
    for r in 0..n {
        for c in r..n {
            qp.hessian.push((r, c, 2.0 * ata[(r, c)]));
        }
        qp.linear[r] = -2.0 * att[r];
        qp.push_ineq([(r, -1.0)], 0.0);
    }
    for i in 0..a.nrows() {
        qp.push_ineq((0..n).map(|k| (k, -a[(i, k)])), -t[i]);
    }
    let sol = qp
        .solve()
        .map_err(|e| Error::CalibrationFailure(format!("envelope fit: {e}")))?;
    Ok(DVector::from_iterator(n, sol.x.iter().map(|&x| x.max(0.0))))
}

fn to_array<const N: usize>(v: &DVector<f64>) -> [f64; N] {
    std::array::from_fn(|i| v[i])
}

fn worst_radius(model: &ReactiveSetModel, s: &RawSample, pts: &[Vec2]) -> f64 {
    let (a, semi) = model.body_ellipse(s.v, s.w).expect("grid inside calibrated range");
    pts.iter()
        .map(|p| {
            let q = p - a;
            (q.x / semi[0]).hypot(q.y / semi[1])
        })
        .fold(0.0, f64::max)
}

/// Builds the reactive-set model from simulated maneuvers.
pub fn calibrate(
    config: &CalibrationConfig,
    rp: &ReactParams,
    model: &ModelParams,
    sensor: &SensorParams,
) -> Result<(ReactiveSetModel, CalibrationReport)> {
    config.validate()?;
    rp.validate()?;
    model.validate()?;
    sensor.validate()?;

    let grid = config.grid(model);
    let raw: Vec<RawSample> = grid
        .par_iter()
        .map(|&(v, w)| sample_grid_point(v, w, config, rp, model, sensor))
        .collect::<Result<_>>()?;

    let rows = raw.len();
    let even = DMatrix::from_fn(rows, EVEN_TERMS, |i, k| even_basis(raw[i].v, raw[i].w)[k]);
    let odd = DMatrix::from_fn(rows, ODD_TERMS, |i, k| odd_basis(raw[i].v, raw[i].w)[k]);
    let cx = DVector::from_fn(rows, |i, _| raw[i].mvee.center.x);
    let cy = DVector::from_fn(rows, |i, _| raw[i].mvee.center.y);
    let off_fwd = lstsq(&even, &cx);
    let off_lat = lstsq(&odd, &cy);

    // Axis targets are taken about the fitted center so that center fit
    // error shows up as axis length instead of as uncontained points.
    let axes: Vec<[f64; 2]> = raw
        .iter()
        .map(|s| {
            let a = Vec2::new(
                dot(&to_array(&off_fwd), even_basis(s.v, s.w)),
                dot(&to_array(&off_lat), odd_basis(s.v, s.w)),
            );
            let rel: Vec<Vec2> = s.hull.iter().map(|p| p - a).collect();
            aligned_enclosing_axes(&rel)
        })
        .collect();
    let growth_target = |k: usize| {
        DVector::from_fn(rows, |i, _| {
            let w = axes[i][k];
            (w * w - config.floor * config.floor).max(0.0).sqrt()
        })
    };
    let gx = growth_target(0);
    let gy = growth_target(1);
    let g_fwd = envelope_fit(&even, &gx)?;
    let g_lat = envelope_fit(&even, &gy)?;

    let sq = |r: DVector<f64>| r.norm_squared();
    let residual =
        (sq(&even * &off_fwd - &cx) + sq(&odd * &off_lat - &cy) + sq(&even * &g_fwd - &gx) + sq(&even * &g_lat - &gy))
            / (4 * rows) as f64;
    let mean_axis = axes.iter().map(|w| 0.5 * (w[0] + w[1])).sum::<f64>() / rows as f64;
    let relative_residual = residual.sqrt() / mean_axis;
    if relative_residual > 0.5 {
        return Err(Error::CalibrationFailure(format!(
            "fit residual is {:.0}% of the mean axis length",
            100.0 * relative_residual
        )));
    }

    let mut fitted = ReactiveSetModel {
        v_max: model.v_max,
        omega_max: model.omega_max,
        floor: config.floor,
        offset_coeffs: OffsetCoeffs {
            forward: to_array(&off_fwd),
            lateral: to_array(&off_lat),
        },
        shape_coeffs: ShapeCoeffs {
            forward: to_array(&g_fwd),
            lateral: to_array(&g_lat),
        },
        inflation: 1.0,
    };

    // Smallest inflation containing every hull point, by bisection.
    let contained = |m: &ReactiveSetModel| raw.iter().all(|s| worst_radius(m, s, &s.hull) <= 1.0);
    let cap = 100.0;
    let (mut lo, mut hi) = (0.0, cap);
    fitted.inflation = hi;
    if !contained(&fitted) {
        let worst = raw
            .iter()
            .max_by(|a, b| worst_radius(&fitted, a, &a.hull).total_cmp(&worst_radius(&fitted, b, &b.hull)))
            .expect("nonempty grid");
        return Err(Error::CalibrationFailure(format!(
            "no inflation up to {cap} contains the paths from (v, omega) = ({}, {})",
            worst.v, worst.w
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        fitted.inflation = mid;
        if contained(&fitted) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let exact_inflation = hi;
    fitted.inflation = config.inflation * exact_inflation.max(1.0);
    fitted.validate()?;

    let mut samples = Vec::with_capacity(rows);
    let mut points_total = 0;
    let mut points_contained = 0;
    let mut max_violation = f64::NEG_INFINITY;
    for (s, axis) in raw.iter().zip(&axes) {
        let (a, semi) = fitted.body_ellipse(s.v, s.w)?;
        let min_semi = semi[0].min(semi[1]);
        let mut worst: f64 = 0.0;
        for p in &s.points {
            let q = p - a;
            let r = (q.x / semi[0]).hypot(q.y / semi[1]);
            worst = worst.max(r);
            points_total += 1;
            if r <= 1.0 {
                points_contained += 1;
            }
            max_violation = max_violation.max((r - 1.0) * min_semi);
        }
        let m = s.mvee.shape;
        samples.push(GridSample {
            v: s.v,
            omega: s.w,
            mvee_center: [s.mvee.center.x, s.mvee.center.y],
            mvee_shape: [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]],
            axis_target: *axis,
            path_points: s.points.len(),
            worst_radius: worst,
        });
    }

    let family_size = config.wall_angles * config.wall_offsets.len();
    let report = CalibrationReport {
        samples,
        paths: rows * family_size,
        points_total,
        points_contained,
        max_violation,
        exact_inflation,
        relative_residual,
    };
    Ok((fitted, report))
}

/// Off-grid containment audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub states: usize,
    pub points_total: usize,
    pub points_contained: usize,
    /// `(v, omega, points outside)` for every state with a violation.
    pub violations: Vec<(f64, f64, usize)>,
}

impl AuditReport {
    pub fn fraction_contained(&self) -> f64 {
        if self.points_total == 0 {
            return 1.0;
        }
        self.points_contained as f64 / self.points_total as f64
    }
}

/// Simulates fresh maneuvers from `states` random interior speeds and counts
/// path points falling outside the evaluated set.
pub fn audit_off_grid(
    set: &ReactiveSetModel,
    states: usize,
    seed: u64,
    config: &CalibrationConfig,
    rp: &ReactParams,
    model: &ModelParams,
    sensor: &SensorParams,
) -> Result<AuditReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(f64, f64)> = (0..states)
        .map(|_| {
            (
                rng.random_range(0.0..set.v_max),
                rng.random_range(-set.omega_max..set.omega_max),
            )
        })
        .collect();
    let counts: Vec<(f64, f64, usize, usize)> = draws
        .par_iter()
        .map(|&(v, w)| {
            let x0 = RobotState::new(0.0, 0.0, 0.0, v, w);
            let e = set.evaluate(&x0)?;
            let paths = simulate_reactive_paths(&x0, &config.family(v, model, sensor), rp, model)?;
            let (mut total, mut inside) = (0, 0);
            for s in paths.iter().flatten() {
                total += 1;
                if e.contains(s.position) {
                    inside += 1;
                }
            }
            Ok((v, w, total, inside))
        })
        .collect::<Result<_>>()?;
    let mut report = AuditReport {
        states,
        points_total: 0,
        points_contained: 0,
        violations: Vec::new(),
    };
    for (v, w, total, inside) in counts {
        report.points_total += total;
        report.points_contained += inside;
        if inside < total {
            report.violations.push((v, w, total - inside));
        }
    }
    Ok(report)
}

/// Model calibrated with default model, controller, sensor and calibration
/// settings, shipped so callers need not rerun calibration.
pub fn default_model() -> ReactiveSetModel {
    serde_json::from_str(include_str!("../data/default_calibration.json")).expect("bundled calibration parses")
}
