//! Thin wrapper over clarabel for convex QPs
//!
//! ```text
//! minimize   1/2 x'Px + q'x
//! subject to E x  = e
//!            G x <= g
//! ```

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use crate::error::{Error, Result};

/// Sparse matrix entries as `(row, col, value)`; repeated entries add up.
pub type Triplets = Vec<(usize, usize, f64)>;

#[derive(Debug, Clone, Default)]
pub struct QpProblem {
    pub n: usize,
    /// Hessian entries; only the upper triangle (`row <= col`) is read,
    /// lower entries are mirrored.
    pub hessian: Triplets,
    pub linear: Vec<f64>,
    pub eq: Triplets,
    pub eq_rhs: Vec<f64>,
    pub ineq: Triplets,
    pub ineq_rhs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Multipliers of the equality rows.
    pub eq_duals: Vec<f64>,
    /// Nonnegative multipliers of the inequality rows.
    pub ineq_duals: Vec<f64>,
    pub objective: f64,
    /// False when the solver only reached reduced accuracy.
    pub exact: bool,
}

fn csc(rows: usize, cols: usize, t: &[(usize, usize, f64)]) -> CscMatrix<f64> {
    let (i, (j, v)): (Vec<usize>, (Vec<usize>, Vec<f64>)) = t.iter().map(|&(r, c, v)| (r, (c, v))).unzip();
    CscMatrix::new_from_triplets(rows, cols, i, j, v)
}

impl QpProblem {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            linear: vec![0.0; n],
            ..Self::default()
        }
    }

    /// Appends the row `sum coeffs <= rhs`.
    pub fn push_ineq(&mut self, coeffs: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        let row = self.ineq_rhs.len();
        self.ineq.extend(coeffs.into_iter().map(|(c, v)| (row, c, v)));
        self.ineq_rhs.push(rhs);
    }

    /// Appends the row `sum coeffs = rhs`.
    pub fn push_eq(&mut self, coeffs: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        let row = self.eq_rhs.len();
        self.eq.extend(coeffs.into_iter().map(|(c, v)| (row, c, v)));
        self.eq_rhs.push(rhs);
    }

    pub fn solve(&self) -> Result<QpSolution> {
        let n = self.n;
        let (me, mi) = (self.eq_rhs.len(), self.ineq_rhs.len());
        if self.linear.len() != n {
            return Err(Error::InvalidProblem("linear term has wrong length".into()));
        }
        let upper: Triplets = self
            .hessian
            .iter()
            .map(|&(r, c, v)| if r <= c { (r, c, v) } else { (c, r, v) })
            .collect();
        let p = csc(n, n, &upper);
        let mut rows: Triplets = self.eq.clone();
        rows.extend(self.ineq.iter().map(|&(r, c, v)| (r + me, c, v)));
        if rows.iter().any(|&(r, c, v)| r >= me + mi || c >= n || !v.is_finite()) {
            return Err(Error::InvalidProblem(
                "constraint entry out of range or not finite".into(),
            ));
        }
        let a = csc(me + mi, n, &rows);
        let mut b = self.eq_rhs.clone();
        b.extend(&self.ineq_rhs);
        let mut cones = Vec::new();
        if me > 0 {
            cones.push(SupportedConeT::ZeroConeT(me));
        }
        if mi > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(mi));
        }
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(200)
            .build()
            .expect("static solver settings are valid");
        let mut solver = DefaultSolver::new(&p, &self.linear, &a, &b, &cones, settings)
            .map_err(|e| Error::InvalidProblem(format!("QP setup: {e}")))?;
        solver.solve();
        let sol = &solver.solution;
        let exact = match sol.status {
            SolverStatus::Solved => true,
            SolverStatus::AlmostSolved => false,
            other => {
                return Err(Error::InvalidProblem(format!("QP solve failed: {other:?}")));
            }
        };
        Ok(QpSolution {
            x: sol.x.clone(),
            eq_duals: sol.z[..me].to_vec(),
            ineq_duals: sol.z[me..].to_vec(),
            objective: sol.obj_val,
            exact,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_constrained_quadratic() {
        // min (x-2)^2 + (y+1)^2  s.t. x + y = 0, x <= 1
        let mut qp = QpProblem::new(2);
        qp.hessian = vec![(0, 0, 2.0), (1, 1, 2.0)];
        qp.linear = vec![-4.0, 2.0];
        qp.push_eq([(0, 1.0), (1, 1.0)], 0.0);
        qp.push_ineq([(0, 1.0)], 1.0);
        let s = qp.solve().unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-6 && (s.x[1] + 1.0).abs() < 1e-6);
        assert!(s.ineq_duals[0] > 0.0);
    }

    #[test]
    fn reports_infeasibility() {
        let mut qp = QpProblem::new(1);
        qp.hessian = vec![(0, 0, 1.0)];
        qp.push_ineq([(0, 1.0)], -1.0);
        qp.push_ineq([(0, -1.0)], -1.0);
        assert!(qp.solve().is_err());
    }
}
