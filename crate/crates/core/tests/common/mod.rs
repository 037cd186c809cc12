//! Shared test oracles, independent of the implementation paths they check.

use gapnav_core::qp_core::QpProblem;
use nalgebra::{DMatrix, DVector};

/// Exhaustive active-set enumeration for small QPs.
///
/// Every subset of inequality constraints (plus all equalities) is solved as
/// an equality-constrained KKT system; the minimum objective over all
/// primal-feasible subset solutions is exactly the QP optimum, because the
/// true active set is one of the subsets and every other feasible subset
/// solution is a feasible point. Returns `None` when no subset yields a
/// feasible point (infeasible problem).
pub fn enumerate_qp(problem: &QpProblem, tol: f64) -> Option<(DVector<f64>, f64)> {
    let (normals, offsets, meq) = problem.unified_constraints();
    let n = problem.f.len();
    let n_ineq = normals.len() - meq;
    assert!(n_ineq <= 16, "enumeration oracle is exponential");
    let mut best: Option<(DVector<f64>, f64)> = None;

    for mask in 0u32..(1 << n_ineq) {
        let mut active: Vec<usize> = (0..meq).collect();
        for j in 0..n_ineq {
            if mask & (1 << j) != 0 {
                active.push(meq + j);
            }
        }
        let q = active.len();
        if q > n {
            continue;
        }
        // KKT: [H -N; N' 0] [x; lambda] = [-f; d].
        let dim = n + q;
        let mut kkt = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&problem.h);
        for (col, &k) in active.iter().enumerate() {
            for row in 0..n {
                kkt[(row, n + col)] = -normals[k][row];
                kkt[(n + col, row)] = normals[k][row];
            }
            rhs[n + col] = offsets[k];
        }
        for row in 0..n {
            rhs[row] = -problem.f[row];
        }
        let Some(solution) = kkt.lu().solve(&rhs) else {
            continue;
        };
        let x = solution.rows(0, n).into_owned();
        let feasible = normals
            .iter()
            .zip(&offsets)
            .enumerate()
            .all(|(k, (c, &d))| {
                let slack = c.dot(&x) - d;
                if k < meq {
                    slack.abs() <= tol
                } else {
                    slack >= -tol
                }
            });
        if !feasible {
            continue;
        }
        let objective = 0.5 * (x.transpose() * &problem.h * &x)[(0, 0)] + problem.f.dot(&x);
        match &best {
            Some((_, obj)) if *obj <= objective => {}
            _ => best = Some((x, objective)),
        }
    }
    best
}

#[allow(dead_code)]
pub fn unused() {}
