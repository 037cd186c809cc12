//! Synthetic 360° sensing and constant-velocity Kalman tracking.
//!
//! The sensor reports one noisy range return per agent inside the sensing
//! radius, tagged with the ground-truth agent id (simulation-side
//! association). Each tracked agent runs an independent 4-state filter
//! `[x, y, vx, vy]` with position-only observations; predictions propagate
//! the state and covariance over the planning horizon.

use crate::config::EstimatorParams;
use crate::world_sim::WorldState;
use crate::{AgentId, Vec2};
use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;

/// One 360° scan. Beams without a return read `max_range`; beams with a
/// return carry the exact bearing to the detected agent and its id.
#[derive(Debug, Clone)]
pub struct Scan {
    pub ranges: Vec<f64>,
    pub angles: Vec<f64>,
    pub agent_ids: Vec<Option<AgentId>>,
    pub max_range: f64,
}

impl Scan {
    /// Iterate over returns as `(agent id, bearing, range)`.
    pub fn returns(&self) -> impl Iterator<Item = (AgentId, f64, f64)> + '_ {
        self.agent_ids
            .iter()
            .enumerate()
            .filter_map(move |(i, id)| id.map(|id| (id, self.angles[i], self.ranges[i])))
    }
}

/// Measure all agents within `sensing_range` of the robot. Ranges get
/// additive Gaussian noise and are clamped to `(0, max_range]`.
pub fn sense(
    world: &WorldState,
    noise_std: f64,
    sensing_range: f64,
    beams: usize,
    rng: &mut impl Rng,
) -> Scan {
    let step = 2.0 * std::f64::consts::PI / beams as f64;
    let mut scan = Scan {
        ranges: vec![sensing_range; beams],
        angles: (0..beams).map(|i| i as f64 * step).collect(),
        agent_ids: vec![None; beams],
        max_range: sensing_range,
    };
    let noise = Normal::new(0.0, noise_std.max(0.0)).expect("valid std");
    for agent in &world.agents {
        let rel = agent.position - world.robot.position;
        let range = rel.norm();
        if range > sensing_range || range <= 0.0 {
            continue;
        }
        let bearing = rel.y.atan2(rel.x);
        let noisy = if noise_std > 0.0 {
            (range + noise.sample(rng)).clamp(f64::MIN_POSITIVE, sensing_range)
        } else {
            range
        };
        let beam = (crate::wrap_angle_positive(bearing) / step) as usize % beams;
        // Nearer return wins if two agents share a beam.
        if scan.agent_ids[beam].is_none() || noisy < scan.ranges[beam] {
            scan.ranges[beam] = noisy;
            scan.angles[beam] = bearing;
            scan.agent_ids[beam] = Some(agent.id);
        }
    }
    scan
}

/// Kalman state of one tracked agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentEstimate {
    pub agent_id: AgentId,
    /// `[x, y, vx, vy]`.
    pub state: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    pub last_update_tick: u32,
}

impl AgentEstimate {
    /// Seed a new track from its first measurement: measured position, zero
    /// velocity, diagonal prior covariance.
    pub fn seed(agent_id: AgentId, measured: Vec2, tick: u32, p: &EstimatorParams) -> Self {
        Self {
            agent_id,
            state: Vector4::new(measured.x, measured.y, 0.0, 0.0),
            covariance: Matrix4::from_diagonal(&Vector4::new(
                p.initial_position_var,
                p.initial_position_var,
                p.initial_velocity_var,
                p.initial_velocity_var,
            )),
            last_update_tick: tick,
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.state.x, self.state.y)
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.state.z, self.state.w)
    }
}

/// Constant-velocity transition over `tau` time units.
pub fn transition(tau: f64) -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = tau;
    f[(1, 3)] = tau;
    f
}

fn process_noise(tau: f64, q: f64) -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(0.0, 0.0, q * tau, q * tau))
}

fn symmetrize(m: &mut Matrix4<f64>) {
    *m = (*m + m.transpose()) * 0.5;
}

/// One predict-update cycle with a position measurement taken `dt` after the
/// estimate's last update. Covariance uses the Joseph form so the posterior
/// stays symmetric positive semi-definite.
pub fn kalman_update(
    estimate: &AgentEstimate,
    measured_position: Vec2,
    dt: f64,
    p: &EstimatorParams,
) -> AgentEstimate {
    let f = transition(dt);
    let x_pred = f * estimate.state;
    let mut p_pred = f * estimate.covariance * f.transpose() + process_noise(dt, p.process_noise_var);
    symmetrize(&mut p_pred);

    let h = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
    let r = Matrix2::from_diagonal_element(p.measurement_noise_var);
    let innovation = Vector2::new(measured_position.x, measured_position.y) - h * x_pred;
    let s = h * p_pred * h.transpose() + r;
    let s_inv = s.try_inverse().expect("innovation covariance invertible");
    let gain = p_pred * h.transpose() * s_inv;

    let ikh = Matrix4::identity() - gain * h;
    let mut p_post = ikh * p_pred * ikh.transpose() + gain * r * gain.transpose();
    symmetrize(&mut p_post);

    AgentEstimate {
        agent_id: estimate.agent_id,
        state: x_pred + gain * innovation,
        covariance: p_post,
        last_update_tick: estimate.last_update_tick + dt.round() as u32,
    }
}

/// Predicted agent positions and position covariances at steps `1..=horizon`
/// into the future.
#[derive(Debug, Clone)]
pub struct AgentPrediction {
    pub agent_id: AgentId,
    pub positions: Vec<Vec2>,
    pub covariances: Vec<Matrix2<f64>>,
}

impl AgentPrediction {
    pub fn horizon(&self) -> usize {
        self.positions.len()
    }
}

/// Propagate an estimate `horizon` steps forward under the constant-velocity
/// model with no process noise: position extrapolates linearly and the
/// covariance maps through the transition at each step.
pub fn predict(estimate: &AgentEstimate, horizon: usize, dt: f64) -> AgentPrediction {
    let mut positions = Vec::with_capacity(horizon);
    let mut covariances = Vec::with_capacity(horizon);
    let v = estimate.velocity();
    let o = estimate.position();
    for i in 1..=horizon {
        let tau = i as f64 * dt;
        positions.push(o + tau * v);
        let f = transition(tau);
        let sigma = f * estimate.covariance * f.transpose();
        covariances.push(sigma.fixed_view::<2, 2>(0, 0).into_owned());
    }
    AgentPrediction {
        agent_id: estimate.agent_id,
        positions,
        covariances,
    }
}

#[derive(Debug, Clone)]
struct Track {
    estimate: AgentEstimate,
    misses: u32,
}

/// Multi-agent track table keyed by ground-truth id. Iteration order is
/// id-sorted, which keeps every consumer deterministic.
#[derive(Debug, Clone, Default)]
pub struct Tracker {
    tracks: BTreeMap<AgentId, Track>,
}

impl Tracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fold one scan into the track table. Seen agents get a filter cycle;
    /// unseen tracks accumulate misses and are dropped after the configured
    /// streak.
    pub fn update(&mut self, scan: &Scan, robot_position: Vec2, tick: u32, p: &EstimatorParams) {
        let mut seen: Vec<AgentId> = Vec::new();
        for (id, bearing, range) in scan.returns() {
            let measured = robot_position + range * Vec2::new(bearing.cos(), bearing.sin());
            match self.tracks.get_mut(&id) {
                Some(track) => {
                    let dt = tick.saturating_sub(track.estimate.last_update_tick) as f64;
                    track.estimate = kalman_update(&track.estimate, measured, dt.max(1.0), p);
                    track.estimate.last_update_tick = tick;
                    track.misses = 0;
                }
                None => {
                    self.tracks.insert(
                        id,
                        Track {
                            estimate: AgentEstimate::seed(id, measured, tick, p),
                            misses: 0,
                        },
                    );
                }
            }
            seen.push(id);
        }
        self.tracks.retain(|id, track| {
            if seen.contains(id) {
                true
            } else {
                track.misses += 1;
                track.misses < p.drop_after_misses
            }
        });
    }

    pub fn estimates(&self) -> Vec<AgentEstimate> {
        self.tracks.values().map(|t| t.estimate.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }
}
