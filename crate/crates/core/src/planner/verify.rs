//! Post-hoc checks of a solution: any-earlier-witness visibility and dense
//! sampling between nodes.

use serde::{Deserialize, Serialize};

use crate::dynamics::{derivative_vec, RobotState};
use crate::error::Result;
use crate::geometry::{ellipsoid_in_polygon_margin, Ellipsoid};
use crate::sensor::fov_polygon;

use super::{PlanProblem, Trajectory, Witness};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinpReport {
    /// Witness found for each node; node 0 needs none.
    pub witnesses: Vec<Option<Witness>>,
    /// Nodes with no witness among earlier nodes or the observed region.
    pub failures: Vec<usize>,
    /// Best containment margin found per node.
    pub best_margins: Vec<Option<f64>>,
}

impl MinpReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn reactive_at(p: &PlanProblem, x: &RobotState) -> Result<Ellipsoid> {
    let mut x = *x;
    x.linear_speed = x.linear_speed.clamp(0.0, p.reactive.v_max);
    x.angular_speed = x.angular_speed.clamp(-p.reactive.omega_max, p.reactive.omega_max);
    p.reactive.evaluate(&x)
}

fn region_margin(p: &PlanProblem, e: &Ellipsoid) -> Option<f64> {
    p.observed_region.as_ref().map(|r| ellipsoid_in_polygon_margin(e, r))
}

/// Searches every earlier node (latest first) for a field of view that
/// contains node `i`'s reactive set to within `tol`; the observed region
/// also counts as a witness. Occlusion is not considered.
pub fn verify_minp_constraint(traj: &Trajectory, p: &PlanProblem, tol: f64) -> Result<MinpReport> {
    let k = traj.states.len();
    let mut witnesses = vec![None; k];
    let mut failures = Vec::new();
    let mut best_margins = vec![None; k];
    for i in 1..k {
        let e = reactive_at(p, &traj.states[i])?;
        let mut best = region_margin(p, &e);
        if best.is_some_and(|m| m >= -tol) {
            witnesses[i] = Some(Witness::Region);
        }
        for j in (0..i).rev() {
            let m = ellipsoid_in_polygon_margin(&e, &fov_polygon(&traj.states[j], &p.sensor));
            best = Some(best.map_or(m, |b: f64| b.max(m)));
            if witnesses[i].is_none() && m >= -tol {
                witnesses[i] = Some(Witness::Node(j));
            }
        }
        best_margins[i] = best;
        if witnesses[i].is_none() {
            failures.push(i);
        }
    }
    Ok(MinpReport {
        witnesses,
        failures,
        best_margins,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseSample {
    pub t: f64,
    /// Lagged node whose field of view serves as witness, if any.
    pub node: Option<usize>,
    pub fov_margin: Option<f64>,
    pub region_margin: Option<f64>,
}

impl DenseSample {
    pub fn margin(&self) -> f64 {
        match (self.fov_margin, self.region_margin) {
            (Some(a), Some(b)) => a.max(b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationReport {
    pub dense_factor: usize,
    pub samples: Vec<DenseSample>,
    /// Smallest margin over samples that have a witness.
    pub min_margin: f64,
    pub worst_time: f64,
}

impl DiscretizationReport {
    /// True when some sample is not covered by its witness.
    pub fn flagged(&self) -> bool {
        self.min_margin < 0.0
    }
}

/// Cubic Hermite state at time `t`, using node derivatives from the dynamics.
pub fn interpolate(traj: &Trajectory, t: f64) -> RobotState {
    let k = traj.states.len();
    if k == 1 {
        return traj.states[0];
    }
    let h = traj.step();
    let u = (t / h).clamp(0.0, (k - 1) as f64);
    let i = (u.floor() as usize).min(k - 2);
    let s = u - i as f64;
    let (x0, x1) = (traj.states[i].to_vector(), traj.states[i + 1].to_vector());
    let f0 = derivative_vec(&x0, &traj.controls[i].to_vector());
    let f1 = derivative_vec(&x1, &traj.controls[i + 1].to_vector());
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    RobotState::from_vector(&(x0 * h00 + f0 * (h10 * h) + x1 * h01 + f1 * (h11 * h)))
}

/// Samples the solution `dense_factor` times per node interval and checks
/// the reactive set at each time against the field of view of the latest
/// node at least `lag` steps earlier, or the observed region.
pub fn check_discretization(
    traj: &Trajectory,
    p: &PlanProblem,
    lag: usize,
    dense_factor: usize,
) -> Result<DiscretizationReport> {
    let k = traj.states.len();
    let factor = dense_factor.max(1);
    let h = traj.step();
    let n = (k.saturating_sub(1)) * factor;
    let mut samples = Vec::with_capacity(n + 1);
    let mut min_margin = f64::INFINITY;
    let mut worst_time = 0.0;
    for m in 0..=n {
        let (node_index, within) = (m / factor, m % factor);
        let t = (node_index as f64 + within as f64 / factor as f64) * h;
        let x = if within == 0 {
            traj.states[node_index]
        } else {
            interpolate(traj, t)
        };
        let e = reactive_at(p, &x)?;
        let node = (m >= lag * factor).then(|| (m - lag * factor) / factor);
        let fov_margin = node.map(|j| ellipsoid_in_polygon_margin(&e, &fov_polygon(&traj.states[j], &p.sensor)));
        let sample = DenseSample {
            t,
            node,
            fov_margin,
            region_margin: region_margin(p, &e),
        };
        let margin = sample.margin();
        if margin < min_margin {
            min_margin = margin;
            worst_time = t;
        }
        samples.push(sample);
    }
    Ok(DiscretizationReport {
        dense_factor: factor,
        samples,
        min_margin,
        worst_time,
    })
}
