//! Ground-truth world simulation: agent random walk, second-order robot
//! dynamics, and collision detection.
//!
//! Everything here is deterministic given the scenario seed. Agent motion
//! and sensing draw from two independent RNG streams so agent trajectories
//! are identical across pipeline modes for the same seed.

use crate::config::{BoundaryPolicy, RobotModel, ScenarioConfig};
use crate::{wrap_angle, AgentId, Vec2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::io::Write;

/// Ground-truth state of one dynamic agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTruth {
    pub id: AgentId,
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

/// Robot state shared by both dynamics models. For the double integrator the
/// `(heading, linear_speed)` pair is the polar form of the velocity vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub position: Vec2,
    /// Radians, wrapped to (-pi, pi].
    pub heading: f64,
    pub linear_speed: f64,
    pub angular_speed: f64,
    pub model: RobotModel,
}

impl RobotState {
    pub fn velocity(&self) -> Vec2 {
        Vec2::new(
            self.linear_speed * self.heading.cos(),
            self.linear_speed * self.heading.sin(),
        )
    }
}

/// Axis-aligned world box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// Immutable snapshot of the world at one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub tick: u32,
    pub robot: RobotState,
    pub agents: Vec<AgentTruth>,
    pub bounds: Bounds,
}

/// Spawn agents uniformly in the world box (outside the robot's spawn
/// clearance), headings uniform in [0, 2pi), speeds uniform in the configured
/// range. The robot starts at the configured pose facing the goal.
pub fn spawn_scenario(cfg: &ScenarioConfig, rng: &mut impl Rng) -> WorldState {
    let half = Vec2::new(cfg.world_size[0] / 2.0, cfg.world_size[1] / 2.0);
    let bounds = Bounds {
        min: -half,
        max: half,
    };
    let start = cfg.robot_start_v();
    let mut agents = Vec::with_capacity(cfg.n_agents);
    for id in 0..cfg.n_agents {
        let position = loop {
            let p = Vec2::new(
                rng.random_range(bounds.min.x..=bounds.max.x),
                rng.random_range(bounds.min.y..=bounds.max.y),
            );
            if (p - start).norm() >= cfg.spawn_clearance {
                break p;
            }
        };
        let heading = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        let speed = rng.random_range(cfg.agent_speed_range[0]..=cfg.agent_speed_range[1]);
        agents.push(AgentTruth {
            id: id as AgentId,
            position,
            velocity: speed * Vec2::new(heading.cos(), heading.sin()),
            radius: cfg.agent_radius,
        });
    }
    let to_goal = cfg.goal_v() - start;
    let heading = if to_goal.norm() > 1e-12 {
        to_goal.y.atan2(to_goal.x)
    } else {
        std::f64::consts::FRAC_PI_2
    };
    WorldState {
        tick: 0,
        robot: RobotState {
            position: start,
            heading,
            linear_speed: 0.0,
            angular_speed: 0.0,
            model: cfg.robot_model,
        },
        agents,
        bounds,
    }
}

/// Advance every agent one step: rotate the velocity by a zero-mean Gaussian
/// heading perturbation, integrate, and apply the boundary policy. Speed is
/// conserved; agent-agent overlap is allowed.
pub fn step_agents(
    world: &WorldState,
    heading_noise_std: f64,
    boundary: BoundaryPolicy,
    rng: &mut impl Rng,
) -> WorldState {
    let noise = Normal::new(0.0, heading_noise_std.max(0.0)).expect("valid std");
    let mut next = world.clone();
    next.tick = world.tick + 1;
    for agent in &mut next.agents {
        if heading_noise_std > 0.0 {
            let dtheta = noise.sample(rng);
            let (s, c) = dtheta.sin_cos();
            let v = agent.velocity;
            agent.velocity = Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y);
        }
        agent.position += agent.velocity;
        apply_boundary(agent, &world.bounds, boundary);
    }
    next
}

fn apply_boundary(agent: &mut AgentTruth, bounds: &Bounds, policy: BoundaryPolicy) {
    match policy {
        BoundaryPolicy::Reflect => {
            for axis in 0..2 {
                let (lo, hi) = (bounds.min[axis], bounds.max[axis]);
                let span = hi - lo;
                let mut p = agent.position[axis];
                let mut v = agent.velocity[axis];
                // Mirror repeatedly in case of an overshoot past both walls.
                while p < lo || p > hi {
                    if p < lo {
                        p = 2.0 * lo - p;
                        v = -v;
                    } else {
                        p = 2.0 * hi - p;
                        v = -v;
                    }
                    if span <= 0.0 {
                        break;
                    }
                }
                agent.position[axis] = p;
                agent.velocity[axis] = v;
            }
        }
        BoundaryPolicy::Wrap => {
            for axis in 0..2 {
                let (lo, hi) = (bounds.min[axis], bounds.max[axis]);
                let span = hi - lo;
                let mut p = agent.position[axis];
                if span > 0.0 {
                    while p < lo {
                        p += span;
                    }
                    while p > hi {
                        p -= span;
                    }
                }
                agent.position[axis] = p;
            }
        }
    }
}

/// Advance the robot by one control step with semi-implicit Euler
/// integration (velocity first, then position). Linear speed is clamped to
/// `[0, v_max]`.
///
/// Control mapping: unicycle `(linear acceleration, angular acceleration)`;
/// double integrator `(acceleration x, acceleration y)`.
pub fn step_robot(state: &RobotState, control: Vec2, dt: f64, v_max: f64) -> RobotState {
    let mut next = state.clone();
    match state.model {
        RobotModel::SecondOrderUnicycle => {
            next.linear_speed = (state.linear_speed + control.x * dt).clamp(0.0, v_max);
            next.angular_speed = state.angular_speed + control.y * dt;
            next.heading = wrap_angle(state.heading + next.angular_speed * dt);
            next.position = state.position
                + next.linear_speed * dt * Vec2::new(next.heading.cos(), next.heading.sin());
        }
        RobotModel::DoubleIntegrator => {
            let mut v = state.velocity() + control * dt;
            let speed = v.norm();
            if speed > v_max {
                v *= v_max / speed;
            }
            next.position = state.position + v * dt;
            next.linear_speed = v.norm();
            if next.linear_speed > 1e-12 {
                next.heading = v.y.atan2(v.x);
            }
            next.angular_speed = wrap_angle(next.heading - state.heading) / dt;
        }
    }
    next
}

/// Ids of agents currently in contact with the (point) robot: strict
/// inequality, so touching exactly at the radius is safe.
pub fn check_collision(world: &WorldState) -> Vec<AgentId> {
    world
        .agents
        .iter()
        .filter(|a| (world.robot.position - a.position).norm() < a.radius)
        .map(|a| a.id)
        .collect()
}

/// World plus its two RNG streams; the unit of deterministic replay.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub world: WorldState,
    pub cfg: ScenarioConfig,
    motion_rng: ChaCha8Rng,
    sense_rng: ChaCha8Rng,
}

// Stream separators for the per-trial seed.
const MOTION_STREAM: u64 = 0x6d6f_7469_6f6e_u64;
const SENSE_STREAM: u64 = 0x5e5e_5e5e_5e5e_u64;

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let mut motion_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ MOTION_STREAM);
        let sense_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ SENSE_STREAM);
        let world = spawn_scenario(cfg, &mut motion_rng);
        Self {
            world,
            cfg: cfg.clone(),
            motion_rng,
            sense_rng,
        }
    }

    /// Apply one robot control, then advance all agents.
    pub fn step(&mut self, control: Vec2) {
        self.world.robot = step_robot(
            &self.world.robot,
            control,
            self.cfg.dt,
            self.cfg.v_max(),
        );
        self.world = step_agents(
            &self.world,
            self.cfg.heading_noise_std,
            self.cfg.boundary,
            &mut self.motion_rng,
        );
    }

    pub fn sense(&mut self) -> crate::estimation::Scan {
        crate::estimation::sense(
            &self.world,
            self.cfg.measurement_noise_std,
            self.cfg.sensing_range,
            self.cfg.scan_beams,
            &mut self.sense_rng,
        )
    }

    pub fn reached_goal(&self) -> bool {
        (self.world.robot.position - self.cfg.goal_v()).norm() <= self.cfg.goal_radius
    }
}

/// Write a rollout trace as CSV rows `tick,id,x,y,vx,vy` (robot id is -1).
pub fn write_trace_csv<W: Write>(out: &mut W, states: &[WorldState]) -> std::io::Result<()> {
    writeln!(out, "tick,id,x,y,vx,vy")?;
    for ws in states {
        let rv = ws.robot.velocity();
        writeln!(
            out,
            "{},-1,{},{},{},{}",
            ws.tick, ws.robot.position.x, ws.robot.position.y, rv.x, rv.y
        )?;
        for a in &ws.agents {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                ws.tick, a.id, a.position.x, a.position.y, a.velocity.x, a.velocity.y
            )?;
        }
    }
    Ok(())
}
