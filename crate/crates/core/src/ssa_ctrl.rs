//! Safe control: track the selected trajectory with a PD reference
//! controller, then project the reference control onto the set satisfying
//! the safety-index decrease condition.
//!
//! The safety index is `phi = d_min^2 - d^2 - k * d_dot` per agent. Whenever
//! `phi >= 0` the controller adds the constraint
//! `L_f phi + L_g phi u <= -eta * phi` and solves the projection QP
//! `min ||u - u_ref||^2` over the control box. An infeasible QP falls back
//! to minimizing the maximum constraint violation with a shared slack.

use crate::config::{ControllerParams, RobotModel};
use crate::estimation::AgentEstimate;
use crate::qp_core::{self, QpProblem, QpStatus};
use crate::world_sim::RobotState;
use crate::{wrap_angle, AgentId, Vec2};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SsaError {
    #[error("robot and agent coincide (d = 0): immediate collision state")]
    Singular,
}

/// Safety-index parameters.
#[derive(Debug, Clone, Copy)]
pub struct SafetyIndexParams {
    pub d_min: f64,
    pub k_grad: f64,
    pub eta: f64,
}

impl From<&ControllerParams> for SafetyIndexParams {
    fn from(c: &ControllerParams) -> Self {
        Self {
            d_min: c.d_min,
            k_grad: c.k_grad,
            eta: c.eta,
        }
    }
}

/// Safety index and its Lie derivatives at one robot/agent pair:
/// `phi_dot = l_f + l_g . u` along the configured robot model.
#[derive(Debug, Clone, Copy)]
pub struct SafetyIndex {
    pub phi: f64,
    pub l_f: f64,
    pub l_g: Vec2,
}

/// One emitted safety constraint (`phi >= 0` holds for the agent).
#[derive(Debug, Clone, Copy)]
pub struct SsaConstraint {
    pub agent_id: AgentId,
    pub phi: f64,
    pub l_f: f64,
    pub l_g: Vec2,
    /// `-eta * phi`, the decrease-condition bound on `phi_dot`.
    pub rhs: f64,
}

/// PD tracking law toward one waypoint, mapped to the robot's control space
/// and saturated per axis to `u_max`.
pub fn reference_control(robot: &RobotState, waypoint: Vec2, gains: &ControllerParams) -> Vec2 {
    let error = waypoint - robot.position;
    let u = match robot.model {
        RobotModel::DoubleIntegrator => gains.kp * error - gains.kd * robot.velocity(),
        RobotModel::SecondOrderUnicycle => {
            let heading = Vec2::new(robot.heading.cos(), robot.heading.sin());
            let along = error.dot(&heading);
            let linear = gains.kp * along - gains.kd * robot.linear_speed;
            let heading_err = if error.norm() > 1e-9 {
                wrap_angle(error.y.atan2(error.x) - robot.heading)
            } else {
                0.0
            };
            let angular = gains.kp_heading * heading_err - gains.kd_heading * robot.angular_speed;
            Vec2::new(linear, angular)
        }
    };
    Vec2::new(
        u.x.clamp(-gains.u_max, gains.u_max),
        u.y.clamp(-gains.u_max, gains.u_max),
    )
}

/// Safety index and Lie derivatives for one agent, using the agent's
/// estimated position and velocity.
pub fn safety_index(
    robot: &RobotState,
    agent_position: Vec2,
    agent_velocity: Vec2,
    params: &SafetyIndexParams,
) -> Result<SafetyIndex, SsaError> {
    let dp = robot.position - agent_position;
    let d = dp.norm();
    if d < 1e-9 {
        return Err(SsaError::Singular);
    }
    let dv = robot.velocity() - agent_velocity;
    let radial = dp.dot(&dv);
    let d_dot = radial / d;
    let phi = params.d_min.powi(2) - d * d - params.k_grad * d_dot;
    // phi_dot = -2 dp.dv - k [ (|dv|^2 + dp.da) / d - (dp.dv)^2 / d^3 ],
    // with da the robot acceleration (constant-velocity agents).
    let drift = -2.0 * radial
        - params.k_grad * (dv.norm_squared() / d - radial * radial / (d * d * d));
    let (l_f, l_g) = match robot.model {
        RobotModel::DoubleIntegrator => (drift, -(params.k_grad / d) * dp),
        RobotModel::SecondOrderUnicycle => {
            let heading = Vec2::new(robot.heading.cos(), robot.heading.sin());
            let normal = Vec2::new(-robot.heading.sin(), robot.heading.cos());
            let turn = robot.linear_speed * robot.angular_speed * dp.dot(&normal);
            (
                drift - params.k_grad * turn / d,
                Vec2::new(-(params.k_grad / d) * dp.dot(&heading), 0.0),
            )
        }
    };
    Ok(SafetyIndex { phi, l_f, l_g })
}

/// Evaluate every tracked agent and emit a constraint for each with
/// `phi >= 0`. Agents in a singular (coincident) state cannot be
/// constrained and are skipped; the collision detector reports them anyway.
pub fn collect_constraints(
    robot: &RobotState,
    estimates: &[AgentEstimate],
    params: &SafetyIndexParams,
) -> Vec<SsaConstraint> {
    let mut out = Vec::new();
    for est in estimates {
        match safety_index(robot, est.position(), est.velocity(), params) {
            Ok(idx) if idx.phi >= 0.0 => out.push(SsaConstraint {
                agent_id: est.agent_id,
                phi: idx.phi,
                l_f: idx.l_f,
                l_g: idx.l_g,
                rhs: -params.eta * idx.phi,
            }),
            _ => {}
        }
    }
    out
}

/// Projection outcome.
#[derive(Debug, Clone)]
pub struct SafeControlResult {
    pub u: Vec2,
    pub qp_status: QpStatus,
    /// The projection QP was infeasible and the least-violating fallback
    /// ran instead.
    pub fallback: bool,
    /// `||u - u_ref||`.
    pub deviation: f64,
}

/// Project the reference control onto the emitted constraints within the
/// control box. With no constraints the reference is returned exactly.
pub fn safe_control(
    u_ref: Vec2,
    constraints: &[SsaConstraint],
    u_max: f64,
) -> SafeControlResult {
    if constraints.is_empty() {
        return SafeControlResult {
            u: u_ref,
            qp_status: QpStatus::Optimal,
            fallback: false,
            deviation: 0.0,
        };
    }
    let m = constraints.len();
    let mut a = DMatrix::zeros(m, 2);
    let mut b = DVector::zeros(m);
    for (i, c) in constraints.iter().enumerate() {
        a[(i, 0)] = c.l_g.x;
        a[(i, 1)] = c.l_g.y;
        b[i] = c.rhs - c.l_f;
    }
    let h = DMatrix::identity(2, 2) * 2.0;
    let f = DVector::from_vec(vec![-2.0 * u_ref.x, -2.0 * u_ref.y]);
    let problem = QpProblem::new(h, f)
        .with_inequalities(a.clone(), b.clone())
        .with_bounds(
            DVector::from_element(2, -u_max),
            DVector::from_element(2, u_max),
        );
    if let Ok(sol) = qp_core::solve_default(&problem) {
        if sol.status == QpStatus::Optimal {
            let u = Vec2::new(sol.u[0], sol.u[1]);
            return SafeControlResult {
                u,
                qp_status: QpStatus::Optimal,
                fallback: false,
                deviation: (u - u_ref).norm(),
            };
        }
    }

    // Fallback: minimize the maximum violation with a shared slack, with a
    // small pull toward the reference as tie-break.
    let tie = 1e-4;
    let mut h3 = DMatrix::zeros(3, 3);
    h3[(0, 0)] = 2.0 * tie;
    h3[(1, 1)] = 2.0 * tie;
    h3[(2, 2)] = 2.0;
    let f3 = DVector::from_vec(vec![-2.0 * tie * u_ref.x, -2.0 * tie * u_ref.y, 0.0]);
    let mut a3 = DMatrix::zeros(m, 3);
    for (i, c) in constraints.iter().enumerate() {
        a3[(i, 0)] = c.l_g.x;
        a3[(i, 1)] = c.l_g.y;
        a3[(i, 2)] = -1.0;
    }
    let relaxed = QpProblem::new(h3, f3)
        .with_inequalities(a3, b)
        .with_bounds(
            DVector::from_vec(vec![-u_max, -u_max, 0.0]),
            DVector::from_vec(vec![u_max, u_max, f64::INFINITY]),
        );
    match qp_core::solve_default(&relaxed) {
        Ok(sol) if sol.status == QpStatus::Optimal => {
            let u = Vec2::new(sol.u[0], sol.u[1]);
            SafeControlResult {
                u,
                qp_status: QpStatus::Infeasible,
                fallback: true,
                deviation: (u - u_ref).norm(),
            }
        }
        // The relaxed problem is always feasible; this arm only guards
        // numerical collapse. Stay put.
        _ => SafeControlResult {
            u: Vec2::zeros(),
            qp_status: QpStatus::Infeasible,
            fallback: true,
            deviation: u_ref.norm(),
        },
    }
}
