//! Small dense convex QP solver:
//!
//! ```text
//!     minimize   1/2 u' H u + f' u
//!     subject to A u <= b,  Aeq u = beq,  lo <= u <= hi
//! ```
//!
//! Dual active-set method in the style of Goldfarb and Idnani: start at the
//! unconstrained minimizer and add violated constraints one at a time,
//! taking dual steps to drop blocking constraints. Strictly convex problems
//! only (H positive definite after a tiny jitter). Problems here are tiny
//! (n <= ~40), so every step re-solves its KKT system from scratch rather
//! than maintaining an incremental factorization.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("H is not positive definite (Cholesky failed after 1e-10 jitter)")]
    NotPositiveDefinite,
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Problem data. Empty matrices stand for "no constraints of that kind";
/// infinite bounds are unconstrained.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl QpProblem {
    pub fn new(h: DMatrix<f64>, f: DVector<f64>) -> Self {
        let n = f.len();
        Self {
            h,
            f,
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a = a;
        self.b = b;
        self
    }

    pub fn with_equalities(mut self, a_eq: DMatrix<f64>, b_eq: DVector<f64>) -> Self {
        self.a_eq = a_eq;
        self.b_eq = b_eq;
        self
    }

    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    fn check_dims(&self) -> Result<(), QpError> {
        let n = self.f.len();
        let dim = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(QpError::Dimension(what.to_string()))
            }
        };
        dim(self.h.nrows() == n && self.h.ncols() == n, "H must be n x n")?;
        dim(self.a.ncols() == n || self.a.nrows() == 0, "A must have n columns")?;
        dim(self.a.nrows() == self.b.len(), "A rows must match b")?;
        dim(
            self.a_eq.ncols() == n || self.a_eq.nrows() == 0,
            "Aeq must have n columns",
        )?;
        dim(self.a_eq.nrows() == self.b_eq.len(), "Aeq rows must match beq")?;
        dim(self.lower.len() == n && self.upper.len() == n, "bounds must be length n")?;
        Ok(())
    }

    /// All constraints in the internal `c' u >= d` form: equalities first,
    /// then the rows of `A u <= b`, then finite lower and upper bounds.
    /// Returns `(normals, offsets, n_equalities)`.
    pub fn unified_constraints(&self) -> (Vec<DVector<f64>>, Vec<f64>, usize) {
        let n = self.f.len();
        let mut normals = Vec::new();
        let mut offsets = Vec::new();
        for i in 0..self.a_eq.nrows() {
            normals.push(self.a_eq.row(i).transpose());
            offsets.push(self.b_eq[i]);
        }
        let meq = normals.len();
        for i in 0..self.a.nrows() {
            normals.push(-self.a.row(i).transpose());
            offsets.push(-self.b[i]);
        }
        for j in 0..n {
            if self.lower[j].is_finite() {
                let mut c = DVector::zeros(n);
                c[j] = 1.0;
                normals.push(c);
                offsets.push(self.lower[j]);
            }
        }
        for j in 0..n {
            if self.upper[j].is_finite() {
                let mut c = DVector::zeros(n);
                c[j] = -1.0;
                normals.push(c);
                offsets.push(-self.upper[j]);
            }
        }
        (normals, offsets, meq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

/// Solver output. `active_set` and `duals` index the unified constraint
/// ordering of [`QpProblem::unified_constraints`].
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub u: DVector<f64>,
    pub status: QpStatus,
    pub objective: f64,
    pub active_set: Vec<usize>,
    pub duals: Vec<f64>,
}

/// Worst-case KKT residuals of a solution.
#[derive(Debug, Clone, Copy)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

pub fn solve_default(problem: &QpProblem) -> Result<QpSolution, QpError> {
    solve(problem, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

pub fn solve(problem: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution, QpError> {
    problem.check_dims()?;
    let n = problem.f.len();
    let sym = (&problem.h + problem.h.transpose()) * 0.5;
    let chol = match Cholesky::new(sym.clone()) {
        Some(c) => c,
        None => Cholesky::new(sym + DMatrix::identity(n, n) * 1e-10)
            .ok_or(QpError::NotPositiveDefinite)?,
    };

    let (mut normals, mut offsets, meq) = problem.unified_constraints();
    let m = normals.len();

    // Unconstrained minimizer.
    let mut x = chol.solve(&(-&problem.f));
    let mut active: Vec<usize> = Vec::new();
    let mut duals: Vec<f64> = Vec::new();

    let fail = |status: QpStatus, x: DVector<f64>, active: Vec<usize>, duals: Vec<f64>, problem: &QpProblem| {
        let objective = 0.5 * (x.transpose() * &problem.h * &x)[(0, 0)] + problem.f.dot(&x);
        QpSolution {
            u: x,
            status,
            objective,
            active_set: active,
            duals,
        }
    };

    let mut iter = 0usize;
    // Force equalities in first, then satisfy inequalities most-violated
    // first.
    loop {
        iter += 1;
        if iter > max_iter {
            return Ok(fail(QpStatus::MaxIter, x, active, duals, problem));
        }

        // Most violated constraint: equalities by |slack|, then inequalities
        // by negative slack.
        let mut candidate: Option<(usize, f64)> = None;
        for k in 0..m {
            if active.contains(&k) {
                continue;
            }
            let slack = normals[k].dot(&x) - offsets[k];
            let violated = if k < meq { slack.abs() > tol } else { slack < -tol };
            if violated {
                // Equalities take priority; otherwise pick the worst slack.
                let score = if k < meq { f64::NEG_INFINITY } else { slack };
                match candidate {
                    Some((_, best)) if best <= score => {}
                    _ => candidate = Some((k, score)),
                }
            }
        }
        let p = match candidate {
            Some((k, _)) => k,
            None => {
                let objective =
                    0.5 * (x.transpose() * &problem.h * &x)[(0, 0)] + problem.f.dot(&x);
                let mut order: Vec<usize> = (0..active.len()).collect();
                order.sort_by_key(|&i| active[i]);
                let active_sorted: Vec<usize> = order.iter().map(|&i| active[i]).collect();
                let duals_sorted: Vec<f64> = order.iter().map(|&i| duals[i]).collect();
                return Ok(QpSolution {
                    u: x,
                    status: QpStatus::Optimal,
                    objective,
                    active_set: active_sorted,
                    duals: duals_sorted,
                });
            }
        };

        // Orient equalities so the violated side looks like c' x >= d.
        if p < meq && normals[p].dot(&x) - offsets[p] > tol {
            normals[p] = -&normals[p];
            offsets[p] = -offsets[p];
        }

        let mut u_plus = 0.0;
        // Inner loop: march toward constraint p, dropping blockers.
        loop {
            iter += 1;
            if iter > max_iter {
                return Ok(fail(QpStatus::MaxIter, x, active, duals, problem));
            }
            let s_p = normals[p].dot(&x) - offsets[p];
            let gi_np = chol.solve(&normals[p]);
            let q = active.len();
            let (z, r) = if q == 0 {
                (gi_np.clone(), DVector::zeros(0))
            } else {
                let mut nmat = DMatrix::zeros(n, q);
                for (col, &k) in active.iter().enumerate() {
                    nmat.set_column(col, &normals[k]);
                }
                let gin = chol.solve(&nmat);
                let mmat = nmat.transpose() * &gin;
                let rhs = nmat.transpose() * &gi_np;
                let r = match Cholesky::new(mmat.clone()) {
                    Some(c) => c.solve(&rhs),
                    None => mmat
                        .lu()
                        .solve(&rhs)
                        .ok_or_else(|| QpError::Numerical("singular active-set system".into()))?,
                };
                let z = &gi_np - gin * &r;
                (z, r)
            };

            // Dual step bound: first active inequality whose multiplier
            // would cross zero.
            let mut t1 = f64::INFINITY;
            let mut blocker: Option<usize> = None;
            for (idx, &k) in active.iter().enumerate() {
                if k < meq {
                    continue;
                }
                if r[idx] > tol {
                    let step = duals[idx] / r[idx];
                    if step < t1 {
                        t1 = step;
                        blocker = Some(idx);
                    }
                }
            }

            // Primal step to reach the constraint.
            let ctz = normals[p].dot(&z);
            let t2 = if ctz > tol { -s_p / ctz } else { f64::INFINITY };

            let t = t1.min(t2);
            if !t.is_finite() {
                return Ok(fail(QpStatus::Infeasible, x, active, duals, problem));
            }

            if t2.is_finite() {
                x += &z * t;
            }
            for idx in 0..active.len() {
                duals[idx] -= t * r[idx];
            }
            u_plus += t;

            if t2 <= t1 && t2.is_finite() {
                active.push(p);
                duals.push(u_plus);
                break;
            }
            let idx = blocker.expect("finite t1 implies a blocker");
            active.remove(idx);
            duals.remove(idx);
        }
    }
}

/// KKT residuals of a solution against its problem, using the unified
/// constraint ordering.
pub fn kkt_residuals(problem: &QpProblem, solution: &QpSolution) -> KktResiduals {
    let (normals, offsets, meq) = problem.unified_constraints();
    let mut grad = &problem.h * &solution.u + &problem.f;
    for (idx, &k) in solution.active_set.iter().enumerate() {
        grad -= &normals[k] * solution.duals[idx];
    }
    let stationarity = grad.amax();
    let mut primal: f64 = 0.0;
    for (k, c) in normals.iter().enumerate() {
        let slack = c.dot(&solution.u) - offsets[k];
        if k < meq {
            primal = primal.max(slack.abs());
        } else {
            primal = primal.max(-slack);
        }
    }
    let mut dual: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for (idx, &k) in solution.active_set.iter().enumerate() {
        let slack = normals[k].dot(&solution.u) - offsets[k];
        comp = comp.max((solution.duals[idx] * slack).abs());
        if k >= meq {
            dual = dual.max(-solution.duals[idx]);
        }
    }
    KktResiduals {
        stationarity,
        primal: primal.max(0.0),
        dual,
        complementarity: comp,
    }
}
