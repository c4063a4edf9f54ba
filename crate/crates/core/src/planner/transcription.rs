//! Direct transcription of the minimum-time problem into blocks of
//! constraints over small sets of decision variables.
//!
//! Variable layout for `K` nodes: states `x_0 .. x_{K-1}` (five each), then
//! controls `u_0 .. u_{K-1}` (two each), then `t_f`, then two auxiliary
//! variables `(phi, b)` per occlusion pair describing a separating line.

use std::f64::consts::PI;

use crate::dynamics::{
    defect_vec, derivative_jacobians, derivative_vec, ControlInput, ControlVec, RobotState, StateVec,
};
use crate::error::{Error, Result};
use crate::geometry::{
    ellipsoid_in_polygon_margin, ellipsoid_polygon_separation_grad, face_margin_grad, perp, posed_face_margin_grad,
    rotation, rotation_derivative, signed_distance_grad, ConvexPolygon, Ellipsoid, Face, MarginGrad, Vec2,
};
use crate::reactive_set::EllipsoidJacobian;

use super::{PlanProblem, Trajectory};

/// Bounds at or beyond this magnitude are treated as absent.
pub const UNBOUNDED: f64 = 1e20;

const T_F_MIN: f64 = 0.05;
const T_F_MAX: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Reactive-set separation and visibility constraints.
    Secure,
    /// Point-robot clearance only.
    Baseline,
}

/// What certifies node `i` as previously observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Witness {
    /// Field of view at an earlier node.
    Node(usize),
    /// The region already observed before planning.
    Region,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockKind {
    Defect {
        i: usize,
    },
    Separation {
        i: usize,
        obstacle: usize,
    },
    Clearance {
        i: usize,
        obstacle: usize,
    },
    Visibility {
        i: usize,
        j: usize,
    },
    Region {
        i: usize,
    },
    Occlusion {
        i: usize,
        j: usize,
        obstacle: usize,
        aux: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Block {
    pub kind: BlockKind,
    pub vars: Vec<usize>,
    pub equality: bool,
    /// First row within the equality or inequality group.
    pub first_row: usize,
    pub rows: usize,
}

/// Row and block counts, for reporting and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub defect_rows: usize,
    pub boundary_blocks: usize,
    pub obstacle_margins: usize,
    /// Node pairs `(i, j)` with `j` at `i - lag` or `i - lag - 1`; each
    /// contributes one row per FOV face.
    pub visibility_margins: usize,
    pub region_nodes: usize,
    pub occlusion_pairs: usize,
}

pub struct Transcription<'a> {
    pub problem: &'a PlanProblem,
    pub mode: Mode,
    pub k: usize,
    pub lag: usize,
    pub witnesses: Vec<Option<Witness>>,
    pub blocks: Vec<Block>,
    pub n_eq: usize,
    pub n_ineq: usize,
    pub n_aux: usize,
    pub counts: Counts,
    /// Initial `(phi, b)` for each occlusion pair.
    pub aux_inits: Vec<(f64, f64)>,
    fov: ConvexPolygon,
}

fn state_var(i: usize, c: usize) -> usize {
    5 * i + c
}

/// Chains a margin gradient through the reactive-set Jacobian.
fn chain(g: &MarginGrad, jac: &EllipsoidJacobian) -> [f64; 5] {
    std::array::from_fn(|k| g.d_center.dot(&jac.d_center[k]) + g.d_shape.component_mul(&jac.d_shape[k]).sum())
}

impl<'a> Transcription<'a> {
    pub fn n(&self) -> usize {
        7 * self.k + 1 + 2 * self.n_aux
    }

    pub fn control_var(&self, i: usize, c: usize) -> usize {
        5 * self.k + 2 * i + c
    }

    pub fn tf_var(&self) -> usize {
        7 * self.k
    }

    fn aux_var(&self, a: usize) -> usize {
        7 * self.k + 1 + 2 * a
    }

    /// Builds the constraint blocks. Witness assignment and the set of
    /// occlusion pairs are fixed from `guess`.
    pub fn new(problem: &'a PlanProblem, mode: Mode, guess: &Trajectory) -> Result<Self> {
        let k = problem.nodes;
        let lag = problem.lag;
        if guess.states.len() != k || guess.controls.len() != k {
            return Err(Error::InvalidProblem(format!(
                "guess has {} nodes, problem has {k}",
                guess.states.len()
            )));
        }
        let mut t = Transcription {
            problem,
            mode,
            k,
            lag,
            witnesses: vec![None; k],
            blocks: Vec::new(),
            n_eq: 0,
            n_ineq: 0,
            n_aux: 0,
            counts: Counts {
                boundary_blocks: 2,
                ..Counts::default()
            },
            aux_inits: Vec::new(),
            fov: problem.sensor.body_fov(),
        };

        for i in 0..k - 1 {
            let mut vars: Vec<usize> = (0..5).map(|c| state_var(i, c)).collect();
            vars.extend((0..2).map(|c| t.control_var(i, c)));
            vars.extend((0..5).map(|c| state_var(i + 1, c)));
            vars.extend((0..2).map(|c| t.control_var(i + 1, c)));
            vars.push(t.tf_var());
            t.push(BlockKind::Defect { i }, vars, true, 5);
            t.counts.defect_rows += 5;
        }

        let obstacles = &problem.belief.known_obstacles;
        for i in 0..k {
            let x: Vec<usize> = (0..5).map(|c| state_var(i, c)).collect();
            for o in 0..obstacles.len() {
                match mode {
                    Mode::Secure => t.push(BlockKind::Separation { i, obstacle: o }, x.clone(), false, 1),
                    Mode::Baseline => t.push(BlockKind::Clearance { i, obstacle: o }, x[..2].to_vec(), false, 1),
                }
                t.counts.obstacle_margins += 1;
            }
        }

        if mode == Mode::Secure {
            t.assign_witnesses(guess)?;
            let mut aux_inits = Vec::new();
            // Node i must also lie in the witness of the interval ending at
            // it, so the whole interval is covered and not just its ends.
            let mut pairs = Vec::new();
            for i in 0..k {
                pairs.extend(t.witnesses[i].map(|w| (i, w)));
                if let Some(w) = i.checked_sub(1).and_then(|j| t.witnesses[j]) {
                    if Some(w) != t.witnesses[i] {
                        pairs.push((i, w));
                    }
                }
            }
            for (i, witness) in pairs {
                let x: Vec<usize> = (0..5).map(|c| state_var(i, c)).collect();
                match Some(witness) {
                    None => {}
                    Some(Witness::Region) => {
                        let rows = problem.observed_region.as_ref().map_or(0, |r| r.faces().len());
                        t.push(BlockKind::Region { i }, x, false, rows);
                        t.counts.region_nodes += 1;
                    }
                    Some(Witness::Node(j)) => {
                        let mut vars = x.clone();
                        vars.extend((0..3).map(|c| state_var(j, c)));
                        t.push(BlockKind::Visibility { i, j }, vars, false, 3);
                        t.counts.visibility_margins += 1;
                        let e = problem.reactive.evaluate(&guess.states[i])?;
                        let apex = guess.states[j].position;
                        for (o, obstacle) in obstacles.iter().enumerate() {
                            let (phi, b, gap) = separating_line(obstacle, apex, &e);
                            if gap > problem.occlusion_radius {
                                continue;
                            }
                            let aux = aux_inits.len();
                            aux_inits.push((phi, b));
                            let mut vars = x.clone();
                            vars.extend([state_var(j, 0), state_var(j, 1)]);
                            let av = 7 * k + 1 + 2 * aux;
                            vars.extend([av, av + 1]);
                            let rows = obstacle.vertices().len() + 2;
                            t.push(BlockKind::Occlusion { i, j, obstacle: o, aux }, vars, false, rows);
                            t.counts.occlusion_pairs += 1;
                        }
                    }
                }
            }
            t.n_aux = aux_inits.len();
            t.aux_inits = aux_inits;
        }
        Ok(t)
    }

    fn push(&mut self, kind: BlockKind, vars: Vec<usize>, equality: bool, rows: usize) {
        let first_row = if equality { self.n_eq } else { self.n_ineq };
        if equality {
            self.n_eq += rows;
        } else {
            self.n_ineq += rows;
        }
        self.blocks.push(Block {
            kind,
            vars,
            equality,
            first_row,
            rows,
        });
    }

    fn assign_witnesses(&mut self, guess: &Trajectory) -> Result<()> {
        let p = self.problem;
        for i in 0..self.k {
            let in_region = match &p.observed_region {
                Some(r) => {
                    i < self.lag || {
                        let e = p.reactive.evaluate(&guess.states[i])?;
                        ellipsoid_in_polygon_margin(&e, r) >= 0.0
                    }
                }
                None => false,
            };
            self.witnesses[i] = if in_region {
                Some(Witness::Region)
            } else if i >= self.lag {
                Some(Witness::Node(i - self.lag))
            } else {
                None
            };
        }
        Ok(())
    }
}

/// Separating line between `obstacle` and the convex hull of `apex` and
/// `e`, as `(phi, b, gap)` with normal `(cos phi, sin phi)`: the obstacle
/// lies in `n.y <= b`, the hull in `n.y >= b`. A negative gap means the
/// sets overlap by that much along the best direction found.
pub fn separating_line(obstacle: &ConvexPolygon, apex: Vec2, e: &Ellipsoid) -> (f64, f64, f64) {
    const SAMPLES: usize = 720;
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    for s in 0..SAMPLES {
        let phi = 2.0 * PI * s as f64 / SAMPLES as f64 - PI;
        let n = Vec2::new(phi.cos(), phi.sin());
        let hull_min = n.dot(&apex).min(n.dot(&e.center) - (e.shape.transpose() * n).norm());
        let obs_max = obstacle
            .vertices()
            .iter()
            .map(|v| n.dot(v))
            .fold(f64::NEG_INFINITY, f64::max);
        let gap = hull_min - obs_max;
        if gap > best.2 {
            best = (phi, 0.5 * (hull_min + obs_max), gap);
        }
    }
    best
}

/// Ellipse enlarged by `margin` along both body axes, with its Jacobian.
fn enlarged(e: &Ellipsoid, jac: &EllipsoidJacobian, margin: f64, heading: f64) -> (Ellipsoid, EllipsoidJacobian) {
    if margin == 0.0 {
        return (*e, *jac);
    }
    let mut out = *e;
    out.shape += rotation(heading) * margin;
    let mut j = *jac;
    j.d_shape[2] += rotation_derivative(heading) * margin;
    (out, j)
}

pub struct BlockEval {
    pub values: Vec<f64>,
    /// Row-major `rows x vars.len()`.
    pub jac: Vec<f64>,
}

impl Transcription<'_> {
    /// Variable bounds.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let p = self.problem;
        let n = self.n();
        let mut lo = vec![-UNBOUNDED; n];
        let mut hi = vec![UNBOUNDED; n];
        let b = &p.belief.bounds;
        let (mut v_cap, mut w_cap) = (p.model.v_max, p.model.omega_max);
        if self.mode == Mode::Secure {
            v_cap = v_cap.min(p.reactive.v_max);
            w_cap = w_cap.min(p.reactive.omega_max);
        }
        for i in 0..self.k {
            lo[state_var(i, 0)] = b.min.x;
            hi[state_var(i, 0)] = b.max.x;
            lo[state_var(i, 1)] = b.min.y;
            hi[state_var(i, 1)] = b.max.y;
            lo[state_var(i, 3)] = 0.0;
            hi[state_var(i, 3)] = v_cap;
            lo[state_var(i, 4)] = -w_cap;
            hi[state_var(i, 4)] = w_cap;
            lo[self.control_var(i, 0)] = -p.model.a_max;
            hi[self.control_var(i, 0)] = p.model.a_max;
            lo[self.control_var(i, 1)] = -p.model.alpha_max;
            hi[self.control_var(i, 1)] = p.model.alpha_max;
        }
        let s = p.start.to_vector();
        for c in 0..5 {
            lo[state_var(0, c)] = s[c];
            hi[state_var(0, c)] = s[c];
        }
        let last = self.k - 1;
        for c in 0..2 {
            lo[state_var(last, c)] = p.goal[c];
            hi[state_var(last, c)] = p.goal[c];
        }
        let cap = p.goal_speed_cap;
        hi[state_var(last, 3)] = cap.min(v_cap);
        lo[state_var(last, 4)] = -cap.min(w_cap);
        hi[state_var(last, 4)] = cap.min(w_cap);
        lo[self.tf_var()] = T_F_MIN;
        hi[self.tf_var()] = T_F_MAX;
        (lo, hi)
    }

    /// Gradient of the objective `t_f`.
    pub fn objective_gradient(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.n()];
        g[self.tf_var()] = 1.0;
        g
    }

    /// Packs a trajectory (plus auxiliary initial values) into a variable vector.
    pub fn pack(&self, traj: &Trajectory) -> Vec<f64> {
        let mut z = vec![0.0; self.n()];
        for i in 0..self.k {
            let x = traj.states[i].to_vector();
            for c in 0..5 {
                z[state_var(i, c)] = x[c];
            }
            z[self.control_var(i, 0)] = traj.controls[i].linear_accel;
            z[self.control_var(i, 1)] = traj.controls[i].angular_accel;
        }
        z[self.tf_var()] = traj.t_f;
        for (a, &(phi, b)) in self.aux_inits.iter().enumerate() {
            z[self.aux_var(a)] = phi;
            z[self.aux_var(a) + 1] = b;
        }
        z
    }

    pub fn unpack(&self, z: &[f64]) -> Trajectory {
        let states = (0..self.k)
            .map(|i| RobotState::new(z[5 * i], z[5 * i + 1], z[5 * i + 2], z[5 * i + 3], z[5 * i + 4]))
            .collect();
        let controls = (0..self.k)
            .map(|i| ControlInput::new(z[self.control_var(i, 0)], z[self.control_var(i, 1)]))
            .collect();
        Trajectory {
            states,
            controls,
            t_f: z[self.tf_var()],
        }
    }

    /// Values and local Jacobian of one block at local variable values `x`.
    pub fn eval_local(&self, kind: &BlockKind, x: &[f64]) -> Result<BlockEval> {
        let p = self.problem;
        let state = |off: usize| RobotState::new(x[off], x[off + 1], x[off + 2], x[off + 3], x[off + 4]);
        match *kind {
            BlockKind::Defect { .. } => {
                let xi = StateVec::from_column_slice(&x[0..5]);
                let ui = ControlVec::from_column_slice(&x[5..7]);
                let xj = StateVec::from_column_slice(&x[7..12]);
                let uj = ControlVec::from_column_slice(&x[12..14]);
                let tf = x[14];
                let h = tf / (self.k - 1) as f64;
                let d = defect_vec(&xi, &ui, &xj, &uj, h);
                let (fxi, fui) = derivative_jacobians(&xi);
                let (fxj, fuj) = derivative_jacobians(&xj);
                let fsum = derivative_vec(&xi, &ui) + derivative_vec(&xj, &uj);
                let mut jac = vec![0.0; 5 * 15];
                for r in 0..5 {
                    let row = &mut jac[r * 15..(r + 1) * 15];
                    for c in 0..5 {
                        row[c] = -0.5 * h * fxi[(r, c)] - if r == c { 1.0 } else { 0.0 };
                        row[7 + c] = -0.5 * h * fxj[(r, c)] + if r == c { 1.0 } else { 0.0 };
                    }
                    for c in 0..2 {
                        row[5 + c] = -0.5 * h * fui[(r, c)];
                        row[12 + c] = -0.5 * h * fuj[(r, c)];
                    }
                    row[14] = -0.5 * fsum[r] / (self.k - 1) as f64;
                }
                Ok(BlockEval {
                    values: d.iter().copied().collect(),
                    jac,
                })
            }
            BlockKind::Separation { obstacle, .. } => {
                let s = state(0);
                let (e, jac) = p.reactive.evaluate_with_jacobian(&s)?;
                let (e, jac) = enlarged(&e, &jac, p.clearance, s.heading);
                let g = ellipsoid_polygon_separation_grad(&e, &p.belief.known_obstacles[obstacle]);
                Ok(BlockEval {
                    values: vec![g.value],
                    jac: chain(&g, &jac).to_vec(),
                })
            }
            BlockKind::Clearance { obstacle, .. } => {
                let (d, g) = signed_distance_grad(Vec2::new(x[0], x[1]), &p.belief.known_obstacles[obstacle]);
                Ok(BlockEval {
                    values: vec![d - p.baseline_clearance],
                    jac: vec![g.x, g.y],
                })
            }
            BlockKind::Visibility { .. } => {
                let (e, jac) = p.reactive.evaluate_with_jacobian(&state(0))?;
                let apex = Vec2::new(x[5], x[6]);
                let heading = x[7];
                let mut values = Vec::with_capacity(3);
                let mut out = vec![0.0; 3 * 8];
                for (r, face) in self.fov.faces().iter().enumerate() {
                    let (g, dpose) = posed_face_margin_grad(&e, face, apex, heading);
                    values.push(g.value - p.visibility_margin);
                    let dx = chain(&g, &jac);
                    out[r * 8..r * 8 + 5].copy_from_slice(&dx);
                    out[r * 8 + 5..r * 8 + 8].copy_from_slice(&dpose);
                }
                Ok(BlockEval { values, jac: out })
            }
            BlockKind::Region { .. } => {
                let region = p
                    .observed_region
                    .as_ref()
                    .expect("region blocks exist only with a region");
                let (e, jac) = p.reactive.evaluate_with_jacobian(&state(0))?;
                let nf = region.faces().len();
                let mut values = Vec::with_capacity(nf);
                let mut out = vec![0.0; nf * 5];
                for (r, face) in region.faces().iter().enumerate() {
                    let g = face_margin_grad(&e, face);
                    values.push(g.value - p.visibility_margin);
                    out[r * 5..r * 5 + 5].copy_from_slice(&chain(&g, &jac));
                }
                Ok(BlockEval { values, jac: out })
            }
            BlockKind::Occlusion { obstacle, .. } => {
                let (e, jac) = p.reactive.evaluate_with_jacobian(&state(0))?;
                let apex = Vec2::new(x[5], x[6]);
                let (phi, b) = (x[7], x[8]);
                let n = Vec2::new(phi.cos(), phi.sin());
                let dn = perp(n);
                let verts = p.belief.known_obstacles[obstacle].vertices();
                let rows = verts.len() + 2;
                let nv = 9;
                let mut values = Vec::with_capacity(rows);
                let mut out = vec![0.0; rows * nv];
                for (r, v) in verts.iter().enumerate() {
                    values.push(b - n.dot(v));
                    out[r * nv + 7] = -dn.dot(v);
                    out[r * nv + 8] = 1.0;
                }
                let r = verts.len();
                values.push(n.dot(&apex) - b);
                out[r * nv + 5] = n.x;
                out[r * nv + 6] = n.y;
                out[r * nv + 7] = dn.dot(&apex);
                out[r * nv + 8] = -1.0;
                let r = r + 1;
                let g = face_margin_grad(&e, &Face { normal: -n, offset: -b });
                values.push(g.value);
                out[r * nv..r * nv + 5].copy_from_slice(&chain(&g, &jac));
                let stn = e.shape.transpose() * n;
                let len = stn.norm();
                let mut dphi = dn.dot(&e.center);
                if len > 0.0 {
                    dphi -= (e.shape * stn).dot(&dn) / len;
                }
                out[r * nv + 7] = dphi;
                out[r * nv + 8] = -1.0;
                Ok(BlockEval { values, jac: out })
            }
        }
    }

    pub fn local_values(&self, block: &Block, z: &[f64]) -> Vec<f64> {
        block.vars.iter().map(|&v| z[v]).collect()
    }
}

impl Transcription<'_> {
    /// Per-node obstacle and visibility margins at `z`.
    pub fn node_margins(&self, z: &[f64]) -> Result<Vec<super::NodeMargins>> {
        let mut out = vec![
            super::NodeMargins {
                obstacle: None,
                visibility: None,
            };
            self.k
        ];
        let fold = |slot: &mut Option<f64>, v: f64| *slot = Some(slot.map_or(v, |s: f64| s.min(v)));
        for block in &self.blocks {
            let values = self.eval_local(&block.kind, &self.local_values(block, z))?.values;
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            match block.kind {
                BlockKind::Separation { i, .. } | BlockKind::Clearance { i, .. } => fold(&mut out[i].obstacle, min),
                BlockKind::Visibility { i, .. } | BlockKind::Region { i } => fold(&mut out[i].visibility, min),
                BlockKind::Defect { .. } | BlockKind::Occlusion { .. } => {}
            }
        }
        Ok(out)
    }
}
