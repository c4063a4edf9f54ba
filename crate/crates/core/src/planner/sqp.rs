//! Elastic trust-region SQP.
//!
//! Each iteration solves
//!
//! ```text
//! min  g'd + 1/2 d'Bd + rho * sum(p + q + s)
//! s.t. c_E + J_E d = p - q,  g_I + J_I d >= -s,  p, q, s >= 0,
//!      lo - z <= d <= hi - z,  |d|_inf <= radius
//! ```
//!
//! and accepts the step by the actual-to-predicted reduction of the l1 merit
//! `f + rho * (|c_E|_1 + |min(g_I, 0)|_1)`. `B` is the Lagrangian Hessian
//! assembled per block by differencing analytic block gradients, with each
//! block projected onto the positive semidefinite cone.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qp::{QpProblem, Triplets};

use super::transcription::{Transcription, UNBOUNDED};
use super::SolveStatus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverParams {
    pub max_iter: usize,
    /// Largest constraint violation accepted as feasible.
    pub feasibility_tol: f64,
    pub kkt_tol: f64,
    pub initial_radius: f64,
    pub max_radius: f64,
    /// The solve stops once the trust radius falls below this.
    pub min_radius: f64,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    /// Multiple of the identity added to the Hessian model.
    pub regularization: f64,
    /// Relative step for differencing block gradients.
    pub hessian_step: f64,
    /// Replace analytic constraint Jacobians by central differences.
    pub finite_difference_jacobians: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            max_iter: 300,
            feasibility_tol: 1e-4,
            kkt_tol: 1e-3,
            initial_radius: 0.5,
            max_radius: 10.0,
            min_radius: 1e-9,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e8,
            regularization: 1e-4,
            hessian_step: 1e-6,
            finite_difference_jacobians: false,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("feasibility_tol", self.feasibility_tol),
            ("kkt_tol", self.kkt_tol),
            ("initial_radius", self.initial_radius),
            ("max_radius", self.max_radius),
            ("min_radius", self.min_radius),
            ("initial_penalty", self.initial_penalty),
            ("max_penalty", self.max_penalty),
            ("hessian_step", self.hessian_step),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.penalty_growth > 1.0) || !(self.regularization >= 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParams(
                "penalty_growth must exceed 1, regularization be nonnegative, max_iter positive".into(),
            ));
        }
        Ok(())
    }
}

pub struct SqpOutcome {
    pub z: Vec<f64>,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    pub violation: f64,
    pub iterations: usize,
}

/// Constraint values and Jacobians at one point.
struct Eval {
    c_eq: Vec<f64>,
    g: Vec<f64>,
    /// Local Jacobian per block, row-major.
    jacs: Vec<Vec<f64>>,
}

impl Eval {
    fn l1_violation(&self) -> f64 {
        self.c_eq.iter().map(|c| c.abs()).sum::<f64>() + self.g.iter().map(|g| (-g).max(0.0)).sum::<f64>()
    }

    fn max_violation(&self) -> f64 {
        let eq = self.c_eq.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        self.g.iter().fold(eq, |m, g| m.max(-g))
    }
}

fn local_jacobian(t: &Transcription, b: usize, x: &[f64], fd: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    let kind = &t.blocks[b].kind;
    let e = t.eval_local(kind, x)?;
    if !fd {
        return Ok((e.values, e.jac));
    }
    let nv = x.len();
    let rows = e.values.len();
    let mut jac = vec![0.0; rows * nv];
    let mut xp = x.to_vec();
    for k in 0..nv {
        let step = 1e-6 * x[k].abs().max(1.0);
        xp[k] = x[k] + step;
        let hi = t.eval_local(kind, &xp)?.values;
        xp[k] = x[k] - step;
        let lo = t.eval_local(kind, &xp)?.values;
        xp[k] = x[k];
        for r in 0..rows {
            jac[r * nv + k] = (hi[r] - lo[r]) / (2.0 * step);
        }
    }
    Ok((e.values, jac))
}

fn evaluate(t: &Transcription, z: &[f64], fd: bool) -> Result<Eval> {
    let mut c_eq = vec![0.0; t.n_eq];
    let mut g = vec![0.0; t.n_ineq];
    let mut jacs = Vec::with_capacity(t.blocks.len());
    for (b, block) in t.blocks.iter().enumerate() {
        let x = t.local_values(block, z);
        let (values, jac) = local_jacobian(t, b, &x, fd)?;
        let out = if block.equality { &mut c_eq } else { &mut g };
        out[block.first_row..block.first_row + block.rows].copy_from_slice(&values);
        jacs.push(jac);
    }
    if c_eq.iter().chain(&g).any(|v| !v.is_finite()) {
        return Err(Error::InvalidProblem(
            "constraint evaluation produced a non-finite value".into(),
        ));
    }
    Ok(Eval { c_eq, g, jacs })
}

/// Lagrangian Hessian blocks as upper-triangle triplets over global indices.
fn hessian(t: &Transcription, z: &[f64], y: &[f64], zi: &[f64], step: f64, fd: bool) -> Result<Triplets> {
    let mut out = Triplets::new();
    for (b, block) in t.blocks.iter().enumerate() {
        let w: Vec<f64> = (0..block.rows)
            .map(|r| {
                if block.equality {
                    y[block.first_row + r]
                } else {
                    -zi[block.first_row + r]
                }
            })
            .collect();
        if w.iter().all(|v| v.abs() < 1e-12) {
            continue;
        }
        let x = t.local_values(block, z);
        let nv = x.len();
        let weighted = |x: &[f64]| -> Result<Vec<f64>> {
            let (_, jac) = local_jacobian(t, b, x, fd)?;
            Ok((0..nv)
                .map(|k| (0..block.rows).map(|r| w[r] * jac[r * nv + k]).sum())
                .collect())
        };
        let mut h = DMatrix::<f64>::zeros(nv, nv);
        let mut xp = x.clone();
        for k in 0..nv {
            let dk = step * x[k].abs().max(1.0);
            xp[k] = x[k] + dk;
            let hi = weighted(&xp)?;
            xp[k] = x[k] - dk;
            let lo = weighted(&xp)?;
            xp[k] = x[k];
            for r in 0..nv {
                h[(r, k)] = (hi[r] - lo[r]) / (2.0 * dk);
            }
        }
        let h = (&h + h.transpose()) * 0.5;
        let eig = h.symmetric_eigen();
        let clipped = eig.eigenvalues.map(|l| l.max(0.0));
        let h = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        for r in 0..nv {
            for c in r..nv {
                let v = h[(r, c)];
                if v.abs() > 1e-14 {
                    let (gr, gc) = (block.vars[r], block.vars[c]);
                    out.push((gr.min(gc), gr.max(gc), v));
                }
            }
        }
    }
    Ok(out)
}

/// Stationarity and complementarity residual for multipliers `(y, zi)`.
fn kkt_residual(t: &Transcription, ev: &Eval, z: &[f64], lo: &[f64], hi: &[f64], y: &[f64], zi: &[f64]) -> f64 {
    let mut r = t.objective_gradient();
    for (b, block) in t.blocks.iter().enumerate() {
        let nv = block.vars.len();
        let jac = &ev.jacs[b];
        for row in 0..block.rows {
            let m = if block.equality {
                y[block.first_row + row]
            } else {
                -zi[block.first_row + row]
            };
            if m == 0.0 {
                continue;
            }
            for (k, &v) in block.vars.iter().enumerate() {
                r[v] += m * jac[row * nv + k];
            }
        }
    }
    let mut res = 0.0_f64;
    for k in 0..r.len() {
        let tol = 1e-7 * z[k].abs().max(1.0);
        let at_lo = z[k] - lo[k] <= tol;
        let at_hi = hi[k] - z[k] <= tol;
        let s = match (at_lo, at_hi) {
            (true, true) => 0.0,
            (true, false) => (-r[k]).max(0.0),
            (false, true) => r[k].max(0.0),
            (false, false) => r[k].abs(),
        };
        res = res.max(s);
    }
    for (m, g) in zi.iter().zip(&ev.g) {
        res = res.max((m * g).abs());
    }
    res
}

struct Step {
    d: Vec<f64>,
    elastic: f64,
    model: f64,
    y: Vec<f64>,
    zi: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn solve_subproblem(
    t: &Transcription,
    ev: &Eval,
    hess: &Triplets,
    z: &[f64],
    lo: &[f64],
    hi: &[f64],
    free: &[Option<usize>],
    nf: usize,
    radius: f64,
    rho: f64,
    reg: f64,
) -> Result<Step> {
    let (me, mi) = (t.n_eq, t.n_ineq);
    let p0 = nf;
    let q0 = nf + me;
    let s0 = nf + 2 * me;
    let mut qp = QpProblem::new(nf + 2 * me + mi);
    let grad = t.objective_gradient();
    for (k, col) in free.iter().enumerate() {
        if let Some(c) = *col {
            qp.linear[c] = grad[k];
            qp.hessian.push((c, c, reg));
        }
    }
    for &(r, c, v) in hess {
        if let (Some(a), Some(b)) = (free[r], free[c]) {
            qp.hessian.push((a.min(b), a.max(b), v));
        }
    }
    for v in &mut qp.linear[nf..] {
        *v = rho;
    }
    let mut eq_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); me];
    let mut in_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); mi];
    for (b, block) in t.blocks.iter().enumerate() {
        let nv = block.vars.len();
        for row in 0..block.rows {
            let target = if block.equality {
                &mut eq_rows[block.first_row + row]
            } else {
                &mut in_rows[block.first_row + row]
            };
            for (k, &v) in block.vars.iter().enumerate() {
                let j = ev.jacs[b][row * nv + k];
                if let Some(c) = free[v] {
                    if j != 0.0 {
                        target.push((c, if block.equality { j } else { -j }));
                    }
                }
            }
        }
    }
    for (r, mut row) in eq_rows.into_iter().enumerate() {
        row.push((p0 + r, -1.0));
        row.push((q0 + r, 1.0));
        qp.push_eq(row, -ev.c_eq[r]);
    }
    for (r, mut row) in in_rows.into_iter().enumerate() {
        row.push((s0 + r, -1.0));
        qp.push_ineq(row, ev.g[r]);
    }
    for e in nf..nf + 2 * me + mi {
        qp.push_ineq([(e, -1.0)], 0.0);
    }
    for (k, col) in free.iter().enumerate() {
        if let Some(c) = *col {
            let up = if hi[k] >= UNBOUNDED {
                radius
            } else {
                (hi[k] - z[k]).min(radius)
            };
            let down = if lo[k] <= -UNBOUNDED {
                radius
            } else {
                (z[k] - lo[k]).min(radius)
            };
            qp.push_ineq([(c, 1.0)], up.max(0.0));
            qp.push_ineq([(c, -1.0)], down.max(0.0));
        }
    }
    let sol = qp.solve()?;
    let mut d = vec![0.0; z.len()];
    for (k, col) in free.iter().enumerate() {
        if let Some(c) = *col {
            d[k] = sol.x[c];
        }
    }
    let elastic: f64 = sol.x[nf..].iter().map(|v| v.max(0.0)).sum();
    let mut model = 0.0;
    for (k, col) in free.iter().enumerate() {
        if col.is_some() {
            model += grad[k] * d[k];
        }
    }
    let mut bd = 0.0;
    for &(r, c, v) in hess {
        bd += if r == c { v * d[r] * d[r] } else { 2.0 * v * d[r] * d[c] };
    }
    let reg_term: f64 = d
        .iter()
        .zip(free)
        .filter(|(_, f)| f.is_some())
        .map(|(x, _)| x * x)
        .sum();
    model += 0.5 * (bd + reg * reg_term) + rho * elastic;
    Ok(Step {
        d,
        elastic,
        model,
        y: sol.eq_duals,
        zi: sol.ineq_duals[..mi].to_vec(),
    })
}

/// Constraint values at `trial` minus their linear prediction `J d`, the
/// right-hand side of a second-order correction step.
fn corrected(t: &Transcription, ev: &Eval, trial: &Eval, d: &[f64]) -> Eval {
    let mut c_eq = trial.c_eq.clone();
    let mut g = trial.g.clone();
    for (b, block) in t.blocks.iter().enumerate() {
        let nv = block.vars.len();
        let out = if block.equality { &mut c_eq } else { &mut g };
        for row in 0..block.rows {
            let jd: f64 = block
                .vars
                .iter()
                .enumerate()
                .map(|(k, &v)| ev.jacs[b][row * nv + k] * d[v])
                .sum();
            out[block.first_row + row] -= jd;
        }
    }
    Eval {
        c_eq,
        g,
        jacs: ev.jacs.clone(),
    }
}

fn clamp_into(z: &mut [f64], lo: &[f64], hi: &[f64]) {
    for k in 0..z.len() {
        z[k] = z[k].clamp(lo[k], hi[k]);
    }
}

pub fn solve(t: &Transcription, z0: Vec<f64>, params: &SolverParams) -> Result<SqpOutcome> {
    params.validate()?;
    let fd = params.finite_difference_jacobians;
    let (lo, hi) = t.bounds();
    let mut z = z0;
    if z.len() != t.n() {
        return Err(Error::InvalidProblem("initial point has wrong dimension".into()));
    }
    clamp_into(&mut z, &lo, &hi);
    let mut free = vec![None; z.len()];
    let mut nf = 0;
    for k in 0..z.len() {
        if hi[k] - lo[k] > 1e-12 {
            free[k] = Some(nf);
            nf += 1;
        }
    }
    let tf = t.tf_var();
    let mut rho = params.initial_penalty;
    let mut radius = params.initial_radius;
    let mut y = vec![0.0; t.n_eq];
    let mut zi = vec![0.0; t.n_ineq];
    let mut ev = evaluate(t, &z, fd)?;
    let mut hess = hessian(t, &z, &y, &zi, params.hessian_step, fd)?;
    let mut kkt = f64::INFINITY;
    let mut iterations = 0;
    let mut stalled = false;

    while iterations < params.max_iter {
        iterations += 1;
        let step = match solve_subproblem(
            t,
            &ev,
            &hess,
            &z,
            &lo,
            &hi,
            &free,
            nf,
            radius,
            rho,
            params.regularization,
        ) {
            Ok(s) => s,
            Err(_) => {
                radius *= 0.25;
                if radius < params.min_radius {
                    stalled = true;
                    break;
                }
                continue;
            }
        };
        y.clone_from(&step.y);
        zi.clone_from(&step.zi);
        kkt = kkt_residual(t, &ev, &z, &lo, &hi, &y, &zi);
        let viol = ev.max_violation();
        if viol <= params.feasibility_tol && kkt <= params.kkt_tol {
            return Ok(SqpOutcome {
                z,
                status: SolveStatus::Converged,
                kkt_residual: kkt,
                violation: viol,
                iterations,
            });
        }

        let max_dual = y.iter().chain(&zi).fold(0.0_f64, |m, v| m.max(v.abs()));
        let dnorm = step.d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        // Elastics forced by the trust radius say nothing about the penalty.
        let interior = dnorm < 0.9 * radius;
        if step.elastic > 1e-9 && interior && max_dual >= 0.99 * rho && rho < params.max_penalty {
            rho = (rho * params.penalty_growth).min(params.max_penalty);
            continue;
        }

        let phi0 = z[tf] + rho * ev.l1_violation();
        let pred = rho * ev.l1_violation() - step.model;
        if pred <= 1e-12 * phi0.abs().max(1.0) || dnorm < 1e-12 {
            stalled = true;
            break;
        }
        let mut trial = z.clone();
        for k in 0..trial.len() {
            trial[k] += step.d[k];
        }
        clamp_into(&mut trial, &lo, &hi);
        let ratio_at = |trial: &[f64], ev_trial: &Eval| (phi0 - trial[tf] - rho * ev_trial.l1_violation()) / pred;
        let mut accepted = None;
        if let Ok(ev_trial) = evaluate(t, &trial, fd) {
            let ratio = ratio_at(&trial, &ev_trial);
            if ratio > 0.1 {
                if ratio > 0.75 && dnorm >= 0.9 * radius {
                    radius = (2.0 * radius).min(params.max_radius);
                }
                accepted = Some((trial, ev_trial));
            } else {
                let rhs = corrected(t, &ev, &ev_trial, &step.d);
                if let Ok(soc) = solve_subproblem(
                    t,
                    &rhs,
                    &hess,
                    &z,
                    &lo,
                    &hi,
                    &free,
                    nf,
                    radius,
                    rho,
                    params.regularization,
                ) {
                    let mut second = z.clone();
                    for k in 0..second.len() {
                        second[k] += soc.d[k];
                    }
                    clamp_into(&mut second, &lo, &hi);
                    if let Ok(ev_second) = evaluate(t, &second, fd) {
                        if ratio_at(&second, &ev_second) > 0.1 {
                            accepted = Some((second, ev_second));
                        }
                    }
                }
            }
        }
        match accepted {
            Some((trial, ev_trial)) => {
                z = trial;
                ev = ev_trial;
                hess = hessian(t, &z, &y, &zi, params.hessian_step, fd)?;
            }
            None => {
                radius = 0.25 * dnorm.min(radius);
                if radius < params.min_radius {
                    stalled = true;
                    break;
                }
            }
        }
    }

    let violation = ev.max_violation();
    let status = if violation <= params.feasibility_tol && kkt <= params.kkt_tol {
        SolveStatus::Converged
    } else if stalled && violation > params.feasibility_tol {
        SolveStatus::Infeasible
    } else {
        SolveStatus::MaxIter
    };
    Ok(SqpOutcome {
        z,
        status,
        kkt_residual: kkt,
        violation,
        iterations,
    })
}
