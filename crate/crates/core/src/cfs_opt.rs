//! Convex-feasible-set trajectory optimization and scoring.
//!
//! Each nonconvex keep-out constraint `D(x_i, o_ij) >= d_safe` is replaced
//! by the halfspace tangent to the safety disc at the reference: with `g`
//! the unit vector from the predicted agent to the reference waypoint,
//! `g' (x_i - o_ij) >= d_safe`. The halfspace lies inside the true feasible
//! region, so a solution of the resulting QP is strictly safe against the
//! predictions it was built from. One iteration runs online; a
//! to-convergence mode exists for offline validation.

use crate::dagap::Trajectory;
use crate::estimation::AgentPrediction;
use crate::qp_core::{self, QpProblem, QpStatus};
use crate::uncertainty::SafetySchedule;
use crate::{AgentId, Vec2};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CfsError {
    #[error("no candidate trajectories to select from")]
    Empty,
}

#[derive(Debug, Clone, Copy)]
pub struct CfsWeights {
    pub w_ref: f64,
    pub w_vel: f64,
    pub w_acc: f64,
}

/// Predicted agents plus their per-step safety distances.
pub struct ObstacleSet<'a> {
    pub predictions: &'a [AgentPrediction],
    pub schedules: &'a BTreeMap<AgentId, SafetySchedule>,
    /// Safety distance for agents without a schedule.
    pub base_d_safe: f64,
}

impl ObstacleSet<'_> {
    pub fn d_safe(&self, agent_id: AgentId, step: usize) -> f64 {
        self.schedules
            .get(&agent_id)
            .and_then(|s| s.d_safe.get(step.saturating_sub(1)))
            .copied()
            .unwrap_or(self.base_d_safe)
    }
}

pub struct CfsProblem<'a> {
    /// Reference waypoints `x[0..N-1]`; both endpoints stay pinned.
    pub reference: &'a [Vec2],
    pub obstacles: ObstacleSet<'a>,
    pub weights: CfsWeights,
    /// Fallback direction when a reference waypoint sits exactly on a
    /// predicted agent.
    pub goal: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfsStatus {
    Optimal,
    /// QP failed; the reference was kept.
    Infeasible,
    /// CFS was not run (ablation modes without the optimizer).
    Skipped,
}

/// A trajectory after optimization and scoring.
#[derive(Debug, Clone)]
pub struct ScoredTrajectory {
    pub trajectory: Trajectory,
    pub cfs_status: CfsStatus,
}

/// Keep the two trajectories whose final waypoints are nearest the target;
/// ties break by gap key order.
pub fn preselect<'a>(
    trajectories: &'a [Trajectory],
    target: Vec2,
) -> Result<Vec<&'a Trajectory>, CfsError> {
    if trajectories.is_empty() {
        return Err(CfsError::Empty);
    }
    let mut ranked: Vec<&Trajectory> = trajectories.iter().collect();
    ranked.sort_by(|a, b| {
        let da = (a.last() - target).norm();
        let db = (b.last() - target).norm();
        da.partial_cmp(&db)
            .unwrap()
            .then_with(|| a.gap_key.cmp(&b.gap_key))
    });
    ranked.truncate(2);
    Ok(ranked)
}

/// Deviation-plus-smoothness part of the optimization objective:
/// `w_ref ||s - s_r||^2 + w_vel ||V s||^2 + w_acc ||A s||^2` with first and
/// second difference stencils.
pub fn objective(waypoints: &[Vec2], reference: &[Vec2], w: &CfsWeights) -> f64 {
    let dev: f64 = waypoints
        .iter()
        .zip(reference)
        .map(|(x, r)| (x - r).norm_squared())
        .sum();
    let vel: f64 = waypoints
        .windows(2)
        .map(|p| (p[1] - p[0]).norm_squared())
        .sum();
    let acc: f64 = waypoints
        .windows(3)
        .map(|p| (p[2] - 2.0 * p[1] + p[0]).norm_squared())
        .sum();
    w.w_ref * dev + w.w_vel * vel + w.w_acc * acc
}

/// Trajectory score: goal proximity of the final waypoint minus the
/// optimization cost. Highest wins.
pub fn score(waypoints: &[Vec2], reference: &[Vec2], target: Vec2, w: &CfsWeights) -> f64 {
    let last = waypoints.last().expect("nonempty trajectory");
    -(target - last).norm() - objective(waypoints, reference, w)
}

/// Maximum consecutive-waypoint spacing stays within the robot's per-step
/// reach.
pub fn spacing_feasible(waypoints: &[Vec2], v_max: f64, dt: f64) -> bool {
    waypoints
        .windows(2)
        .all(|p| (p[1] - p[0]).norm() <= v_max * dt * (1.0 + 1e-6))
}

/// Exact recheck of the true keep-out constraints against the predictions.
pub fn safety_recheck(waypoints: &[Vec2], obstacles: &ObstacleSet) -> bool {
    for i in 1..waypoints.len() {
        for pred in obstacles.predictions {
            let Some(&o) = pred.positions.get(i - 1) else {
                continue;
            };
            if (waypoints[i] - o).norm() < obstacles.d_safe(pred.agent_id, i) - 1e-9 {
                return false;
            }
        }
    }
    true
}

fn unit_gradient(problem: &CfsProblem, i: usize, o: Vec2, prev: Option<Vec2>) -> Vec2 {
    let diff = problem.reference[i] - o;
    let d = diff.norm();
    if d > 1e-9 {
        return diff / d;
    }
    // Degenerate linearization: reference waypoint on the agent. Reuse the
    // previous step's direction, else aim along the goal bearing.
    if let Some(g) = prev {
        return g;
    }
    let toward_goal = problem.goal - problem.reference[i];
    let n = toward_goal.norm();
    if n > 1e-9 {
        toward_goal / n
    } else {
        Vec2::new(1.0, 0.0)
    }
}

/// One CFS iteration: linearize every keep-out constraint about the
/// reference and solve the QP. On failure the reference is kept and the
/// trajectory reported infeasible.
pub fn cfs_iterate(problem: &CfsProblem) -> (Vec<Vec2>, CfsStatus) {
    let n = problem.reference.len();
    if n <= 2 {
        return (problem.reference.to_vec(), CfsStatus::Optimal);
    }
    // The final waypoint is pinned; if it violates a constraint no QP can
    // fix it.
    let last = problem.reference[n - 1];
    for pred in problem.obstacles.predictions {
        if let Some(&o) = pred.positions.get(n - 2) {
            if (last - o).norm() < problem.obstacles.d_safe(pred.agent_id, n - 1) {
                return (problem.reference.to_vec(), CfsStatus::Infeasible);
            }
        }
    }

    let free = n - 2; // interior waypoints 1..=n-2
    let dim = 2 * free;

    // Per-axis quadratic form P = w_ref I + w_vel V'V + w_acc A'A over all
    // N waypoints, then reduced to the interior block.
    let mut p_full = DMatrix::<f64>::identity(n, n) * problem.weights.w_ref;
    for i in 0..n - 1 {
        // V row: x_{i+1} - x_i.
        let w = problem.weights.w_vel;
        p_full[(i, i)] += w;
        p_full[(i + 1, i + 1)] += w;
        p_full[(i, i + 1)] -= w;
        p_full[(i + 1, i)] -= w;
    }
    for i in 0..n - 2 {
        // A row: x_{i+2} - 2 x_{i+1} + x_i.
        let w = problem.weights.w_acc;
        let idx = [i, i + 1, i + 2];
        let coef = [1.0, -2.0, 1.0];
        for a in 0..3 {
            for b in 0..3 {
                p_full[(idx[a], idx[b])] += w * coef[a] * coef[b];
            }
        }
    }

    // Interleaved layout [x_1, y_1, x_2, y_2, ...]; the quadratic form is
    // axis-separable.
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    let mut f = DVector::<f64>::zeros(dim);
    for a in 0..free {
        let ia = a + 1;
        for b in 0..free {
            let ib = b + 1;
            let v = 2.0 * p_full[(ia, ib)];
            h[(2 * a, 2 * b)] = v;
            h[(2 * a + 1, 2 * b + 1)] = v;
        }
        for axis in 0..2 {
            let mut lin = -2.0 * problem.weights.w_ref * problem.reference[ia][axis];
            for &ib in [0usize, n - 1].iter() {
                lin += 2.0 * p_full[(ia, ib)] * problem.reference[ib][axis];
            }
            f[2 * a + axis] = lin;
        }
    }

    // Linearized keep-out halfspaces for the interior waypoints.
    let mut rows: Vec<[f64; 2]> = Vec::new();
    let mut row_idx: Vec<usize> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for pred in problem.obstacles.predictions {
        let mut prev_g: Option<Vec2> = None;
        for i in 1..=n - 2 {
            let Some(&o) = pred.positions.get(i - 1) else {
                continue;
            };
            let g = unit_gradient(problem, i, o, prev_g);
            prev_g = Some(g);
            let d_safe = problem.obstacles.d_safe(pred.agent_id, i);
            // g' x_i >= d_safe + g' o  ->  -g' x_i <= -(d_safe + g' o).
            rows.push([-g.x, -g.y]);
            row_idx.push(i - 1);
            rhs.push(-(d_safe + g.dot(&o)));
        }
    }
    let mut a_mat = DMatrix::<f64>::zeros(rows.len(), dim);
    for (r, (row, &wp)) in rows.iter().zip(&row_idx).enumerate() {
        a_mat[(r, 2 * wp)] = row[0];
        a_mat[(r, 2 * wp + 1)] = row[1];
    }
    let b_vec = DVector::from_vec(rhs);

    let qp = QpProblem::new(h, f).with_inequalities(a_mat, b_vec);
    let solution = match qp_core::solve_default(&qp) {
        Ok(s) => s,
        Err(_) => return (problem.reference.to_vec(), CfsStatus::Infeasible),
    };
    if solution.status != QpStatus::Optimal {
        return (problem.reference.to_vec(), CfsStatus::Infeasible);
    }
    let mut waypoints = problem.reference.to_vec();
    for a in 0..free {
        waypoints[a + 1] = Vec2::new(solution.u[2 * a], solution.u[2 * a + 1]);
    }
    // Halfspace containment makes this a formality, but recheck exactly.
    if !safety_recheck(&waypoints, &problem.obstacles) {
        return (problem.reference.to_vec(), CfsStatus::Infeasible);
    }
    (waypoints, CfsStatus::Optimal)
}

/// Run CFS once (the online contract) or re-linearize to convergence
/// (offline validation).
pub fn cfs_optimize(problem: &CfsProblem, converge: bool) -> (Vec<Vec2>, CfsStatus) {
    let (mut waypoints, status) = cfs_iterate(problem);
    if !converge || status != CfsStatus::Optimal {
        return (waypoints, status);
    }
    let mut prev_obj = objective(&waypoints, problem.reference, &problem.weights);
    for _ in 0..50 {
        let next_problem = CfsProblem {
            reference: &waypoints,
            obstacles: ObstacleSet {
                predictions: problem.obstacles.predictions,
                schedules: problem.obstacles.schedules,
                base_d_safe: problem.obstacles.base_d_safe,
            },
            weights: problem.weights,
            goal: problem.goal,
        };
        let (next, status) = cfs_iterate(&next_problem);
        if status != CfsStatus::Optimal {
            break;
        }
        let obj = objective(&next, problem.reference, &problem.weights);
        waypoints = next;
        if (prev_obj - obj).abs() < 1e-6 {
            break;
        }
        prev_obj = obj;
    }
    (waypoints, CfsStatus::Optimal)
}
