//! Unicycle kinematics with acceleration controls.
//!
//! State is `(x, y, heading, v, omega)`, controls are `(a, alpha)`.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

pub const STATE_DIM: usize = 5;
pub const CONTROL_DIM: usize = 2;

pub type StateVec = SVector<f64, STATE_DIM>;
pub type ControlVec = SVector<f64, CONTROL_DIM>;
pub type StateJacobian = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type ControlJacobian = SMatrix<f64, STATE_DIM, CONTROL_DIM>;

/// Actuation and speed limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub v_max: f64,
    pub omega_max: f64,
    pub a_max: f64,
    pub alpha_max: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            v_max: 2.0,
            omega_max: 2.0,
            a_max: 1.0,
            alpha_max: 2.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("v_max", self.v_max),
            ("omega_max", self.omega_max),
            ("a_max", self.a_max),
            ("alpha_max", self.alpha_max),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotState {
    pub position: Vec2,
    pub heading: f64,
    #[serde(default)]
    pub linear_speed: f64,
    #[serde(default)]
    pub angular_speed: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, heading: f64, linear_speed: f64, angular_speed: f64) -> Self {
        Self {
            position: Vec2::new(x, y),
            heading,
            linear_speed,
            angular_speed,
        }
    }

    pub fn at_rest(position: Vec2, heading: f64) -> Self {
        Self {
            position,
            heading,
            linear_speed: 0.0,
            angular_speed: 0.0,
        }
    }

    pub fn to_vector(&self) -> StateVec {
        StateVec::new(
            self.position.x,
            self.position.y,
            self.heading,
            self.linear_speed,
            self.angular_speed,
        )
    }

    pub fn from_vector(v: &StateVec) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }

    /// Euclidean norm of `(v, omega)`.
    pub fn speed_norm(&self) -> f64 {
        self.linear_speed.hypot(self.angular_speed)
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }

    pub fn within_limits(&self, params: &ModelParams) -> bool {
        self.is_finite()
            && self.linear_speed.abs() <= params.v_max + 1e-12
            && self.angular_speed.abs() <= params.omega_max + 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub linear_accel: f64,
    pub angular_accel: f64,
}

impl ControlInput {
    pub fn new(linear_accel: f64, angular_accel: f64) -> Self {
        Self {
            linear_accel,
            angular_accel,
        }
    }

    pub fn to_vector(&self) -> ControlVec {
        ControlVec::new(self.linear_accel, self.angular_accel)
    }

    /// Projection onto the admissible box.
    pub fn clamped(&self, params: &ModelParams) -> Self {
        Self {
            linear_accel: self.linear_accel.clamp(-params.a_max, params.a_max),
            angular_accel: self.angular_accel.clamp(-params.alpha_max, params.alpha_max),
        }
    }

    pub fn within_limits(&self, params: &ModelParams) -> bool {
        self.linear_accel.abs() <= params.a_max && self.angular_accel.abs() <= params.alpha_max
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut a = angle.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    a
}

/// `f(x, u) = (v cos(heading), v sin(heading), omega, a, alpha)`.
pub fn derivative(x: &RobotState, u: &ControlInput) -> StateVec {
    derivative_vec(&x.to_vector(), &u.to_vector())
}

pub fn derivative_vec(x: &StateVec, u: &ControlVec) -> StateVec {
    let (s, c) = x[2].sin_cos();
    StateVec::new(x[3] * c, x[3] * s, x[4], u[0], u[1])
}

/// Partial derivatives of [`derivative_vec`] with respect to state and control.
pub fn derivative_jacobians(x: &StateVec) -> (StateJacobian, ControlJacobian) {
    let (s, c) = x[2].sin_cos();
    let mut fx = StateJacobian::zeros();
    fx[(0, 2)] = -x[3] * s;
    fx[(0, 3)] = c;
    fx[(1, 2)] = x[3] * c;
    fx[(1, 3)] = s;
    fx[(2, 4)] = 1.0;
    let mut fu = ControlJacobian::zeros();
    fu[(3, 0)] = 1.0;
    fu[(4, 1)] = 1.0;
    (fx, fu)
}

/// One classical Runge-Kutta step with `u` held constant. Speeds are clamped
/// to the model limits afterwards and the heading is wrapped.
pub fn integrate(x: &RobotState, u: &ControlInput, dt: f64, params: &ModelParams) -> RobotState {
    let x0 = x.to_vector();
    let uv = u.to_vector();
    let k1 = derivative_vec(&x0, &uv);
    let k2 = derivative_vec(&(x0 + k1 * (dt / 2.0)), &uv);
    let k3 = derivative_vec(&(x0 + k2 * (dt / 2.0)), &uv);
    let k4 = derivative_vec(&(x0 + k3 * dt), &uv);
    let x1 = x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    RobotState {
        position: Vec2::new(x1[0], x1[1]),
        heading: wrap_angle(x1[2]),
        linear_speed: x1[3].clamp(-params.v_max, params.v_max),
        angular_speed: x1[4].clamp(-params.omega_max, params.omega_max),
    }
}

/// Trapezoidal collocation defect
/// `x_j - x_i - h/2 (f(x_i, u_i) + f(x_j, u_j))`.
///
/// Headings are compared unwrapped.
pub fn defect(x_i: &RobotState, u_i: &ControlInput, x_j: &RobotState, u_j: &ControlInput, h: f64) -> StateVec {
    defect_vec(
        &x_i.to_vector(),
        &u_i.to_vector(),
        &x_j.to_vector(),
        &u_j.to_vector(),
        h,
    )
}

pub fn defect_vec(x_i: &StateVec, u_i: &ControlVec, x_j: &StateVec, u_j: &ControlVec, h: f64) -> StateVec {
    x_j - x_i - (derivative_vec(x_i, u_i) + derivative_vec(x_j, u_j)) * (h / 2.0)
}

/// Stopping interval of the double integrator `x1' = v, v' = u` under
/// maximal braking `|u| <= u_max`.
pub fn stopping_interval_1d(x1: f64, v: f64, u_max: f64) -> (f64, f64) {
    let d = v * v / (2.0 * u_max);
    if v >= 0.0 {
        (x1, x1 + d)
    } else {
        (x1 - d, x1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    fn close(a: &StateVec, b: &StateVec, tol: f64) -> bool {
        (a - b).amax() <= tol
    }

    #[test]
    fn derivative_examples() {
        let p = ModelParams::default();
        let zero = ControlInput::default();
        let d = derivative(&RobotState::new(0.0, 0.0, 0.0, 1.0, 0.0), &zero);
        assert!(close(&d, &StateVec::new(1.0, 0.0, 0.0, 0.0, 0.0), 1e-15));
        let d = derivative(&RobotState::new(0.0, 0.0, FRAC_PI_2, 1.0, 0.0), &zero);
        assert!(close(&d, &StateVec::new(0.0, 1.0, 0.0, 0.0, 0.0), 1e-15));
        for heading in [-2.0, 0.3, 3.0] {
            let d = derivative(
                &RobotState::new(1.0, 2.0, heading, 0.0, 0.0),
                &ControlInput::new(p.a_max, 0.0),
            );
            assert!(close(&d, &StateVec::new(0.0, 0.0, 0.0, p.a_max, 0.0), 0.0));
        }
    }

    #[test]
    fn integrate_straight_line_is_exact() {
        let p = ModelParams::default();
        let x = integrate(
            &RobotState::new(0.0, 0.0, 0.0, 1.0, 0.0),
            &ControlInput::default(),
            0.1,
            &p,
        );
        assert!((x.position - Vec2::new(0.1, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn integrate_constant_acceleration() {
        let p = ModelParams::default();
        let mut x = RobotState::new(0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..10 {
            x = integrate(&x, &ControlInput::new(1.0, 0.0), 0.1, &p);
        }
        assert!((x.linear_speed - 1.0).abs() < 1e-9);
        assert!((x.position.x - 0.5).abs() < 1e-9);
    }

    #[test]
    fn integrate_circle_returns_to_start() {
        let p = ModelParams::default();
        let mut x = RobotState::new(0.0, 0.0, 0.0, 1.0, 1.0);
        let steps = 6283;
        let dt = TAU / steps as f64;
        for _ in 0..steps {
            x = integrate(&x, &ControlInput::default(), dt, &p);
        }
        assert!(x.position.norm() < 1e-5, "{:?}", x.position);
    }

    #[test]
    fn integrate_clamps_and_wraps() {
        let p = ModelParams::default();
        let x = integrate(
            &RobotState::new(0.0, 0.0, PI - 0.01, 1.99, 1.99),
            &ControlInput::new(p.a_max, p.alpha_max),
            0.1,
            &p,
        );
        assert_eq!(x.linear_speed, p.v_max);
        assert_eq!(x.angular_speed, p.omega_max);
        assert!(x.heading > -PI && x.heading <= PI);
        assert!(x.heading < 0.0);
    }

    #[test]
    fn defect_examples() {
        let u = ControlInput::default();
        let h = 0.25;
        let a = RobotState::new(1.0, 2.0, 0.4, 0.8, 0.0);
        let b = RobotState::new(
            1.0 + 0.8 * h * 0.4f64.cos(),
            2.0 + 0.8 * h * 0.4f64.sin(),
            0.4,
            0.8,
            0.0,
        );
        assert!(defect(&a, &u, &b, &u, h).amax() < 1e-12);

        let mut b2 = b;
        b2.position.x += 1e-3;
        let z = defect(&a, &u, &b2, &u, h);
        assert!((z - StateVec::new(1e-3, 0.0, 0.0, 0.0, 0.0)).amax() < 1e-12);
    }

    #[test]
    fn defect_has_unit_jacobian_in_next_state() {
        let xi = StateVec::new(0.3, -0.2, 0.7, 0.9, -0.4);
        let xj = StateVec::new(0.4, -0.1, 0.6, 1.1, 0.2);
        let ui = ControlVec::new(0.2, -0.5);
        let uj = ControlVec::new(-0.3, 0.1);
        let h = 0.1;
        let (fx, _) = derivative_jacobians(&xj);
        let analytic = StateJacobian::identity() - fx * (h / 2.0);
        for k in 0..STATE_DIM {
            let mut p = xj;
            let mut m = xj;
            p[k] += 1e-6;
            m[k] -= 1e-6;
            let col = (defect_vec(&xi, &ui, &p, &uj, h) - defect_vec(&xi, &ui, &m, &uj, h)) / 2e-6;
            assert!((col - analytic.column(k)).amax() < 1e-8);
        }
        // position rows are exactly the identity
        assert_eq!(analytic[(0, 0)], 1.0);
        assert_eq!(analytic[(1, 1)], 1.0);
    }

    #[test]
    fn stopping_interval_examples() {
        assert_eq!(stopping_interval_1d(0.0, 0.0, 1.0), (0.0, 0.0));
        assert_eq!(stopping_interval_1d(0.0, 1.0, 1.0), (0.0, 0.5));
        assert_eq!(stopping_interval_1d(2.0, -2.0, 1.0), (0.0, 2.0));
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::default().validate().is_ok());
        let bad = ModelParams {
            a_max: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
