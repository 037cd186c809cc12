//! Safe navigation in crowded, dynamic, uncertain 2D worlds.
//!
//! The stack is a hierarchical planner plus a reactive safe controller:
//!
//! - [`world_sim`] — ground-truth simulation of the world, agents, and robot.
//! - [`estimation`] — noisy 360° sensing and per-agent constant-velocity
//!   Kalman tracking with horizon prediction.
//! - [`gap_detect`] — inflated-agent tangent geometry and passable-gap
//!   extraction.
//! - [`dagap`] — multi-trajectory synthesis over predicted gaps, with gap
//!   birth/death handling.
//! - [`uncertainty`] — chi-square confidence margins turning covariances into
//!   per-step robust safety distances and a replan step.
//! - [`qp_core`] — small dense convex QP solver shared by the optimizer and
//!   the controller.
//! - [`cfs_opt`] — one-iteration convex-feasible-set trajectory optimization
//!   and scoring.
//! - [`ssa_ctrl`] — safety-index constraints and the safe-control QP
//!   projection.
//! - [`pipeline`] — the full plan/track/replan loop and the module ablation.
//! - [`harness`] — CLI experiment runner, metrics aggregation, and SVG plots.

pub mod cfs_opt;
pub mod config;
pub mod dagap;
pub mod estimation;
pub mod gap_detect;
pub mod harness;
pub mod pipeline;
pub mod plot;
pub mod qp_core;
pub mod ssa_ctrl;
pub mod uncertainty;
pub mod world_sim;

/// 2D world-frame vector, used for positions, velocities, and controls.
pub type Vec2 = nalgebra::Vector2<f64>;

/// Ground-truth agent identifier, assigned at spawn.
pub type AgentId = u32;

/// Wrap an angle to the interval (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = a % two_pi;
    if w <= -std::f64::consts::PI {
        w += two_pi;
    } else if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

/// Wrap an angle to [0, 2*pi).
pub fn wrap_angle_positive(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let w = a % two_pi;
    if w < 0.0 {
        w + two_pi
    } else {
        w
    }
}
