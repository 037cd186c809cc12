//! Run configuration: benchmark scenario constants, estimator, planner and
//! controller parameters, plus the flat key-value config file loader.
//!
//! Every tunable lives here with its default so a run is fully described by
//! `(config file, CLI overrides)`.

use crate::Vec2;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {value}")]
    BadValue { line: usize, key: String, value: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Robot dynamics model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RobotModel {
    SecondOrderUnicycle,
    DoubleIntegrator,
}

impl fmt::Display for RobotModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RobotModel::SecondOrderUnicycle => write!(f, "unicycle"),
            RobotModel::DoubleIntegrator => write!(f, "double_integrator"),
        }
    }
}

/// What happens to an agent crossing the world edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BoundaryPolicy {
    /// Mirror the position back inside and flip the offending velocity
    /// component.
    Reflect,
    /// Re-enter from the opposite edge.
    Wrap,
}

/// Benchmark scenario constants: world geometry, agent population, sensing.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ScenarioConfig {
    pub n_agents: usize,
    /// Full world extent; the world spans `[-w/2, w/2] x [-h/2, h/2]`.
    pub world_size: [f64; 2],
    pub agent_radius: f64,
    /// Uniform sampling range for agent speed, units per step.
    pub agent_speed_range: [f64; 2],
    /// Robot speed clamp range; `[1]` is `v_max`.
    pub robot_speed_range: [f64; 2],
    /// Std of Gaussian range noise on sensor returns.
    pub measurement_noise_std: f64,
    pub sensing_range: f64,
    pub step_budget: u32,
    pub rng_seed: u64,
    /// Per-step std of the agents' random heading perturbation, radians.
    pub heading_noise_std: f64,
    pub boundary: BoundaryPolicy,
    pub robot_model: RobotModel,
    pub robot_start: [f64; 2],
    pub goal: [f64; 2],
    /// The run succeeds when the robot enters this disc around the goal.
    pub goal_radius: f64,
    /// Agents do not spawn closer than this to the robot start.
    pub spawn_clearance: f64,
    /// Simulation step length; all rates in this config are per step.
    pub dt: f64,
    /// Number of beams in the synthesized 360° scan.
    pub scan_beams: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_agents: 20,
            world_size: [2.0, 2.0],
            agent_radius: 0.05,
            agent_speed_range: [5e-3, 2e-2],
            robot_speed_range: [0.0, 2e-2],
            measurement_noise_std: 0.01,
            sensing_range: 0.2,
            step_budget: 3500,
            rng_seed: 42,
            heading_noise_std: 0.1,
            boundary: BoundaryPolicy::Reflect,
            robot_model: RobotModel::DoubleIntegrator,
            robot_start: [0.0, -0.95],
            goal: [0.0, 0.95],
            goal_radius: 0.05,
            spawn_clearance: 0.2,
            dt: 1.0,
            scan_beams: 360,
        }
    }
}

impl ScenarioConfig {
    pub fn v_max(&self) -> f64 {
        self.robot_speed_range[1]
    }

    pub fn robot_start_v(&self) -> Vec2 {
        Vec2::new(self.robot_start[0], self.robot_start[1])
    }

    pub fn goal_v(&self) -> Vec2 {
        Vec2::new(self.goal[0], self.goal[1])
    }
}

/// Kalman filter noise model and track management.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EstimatorParams {
    /// Process noise variance added to each velocity axis per unit time.
    pub process_noise_var: f64,
    /// Measurement noise variance assumed by the filter (per position axis).
    pub measurement_noise_var: f64,
    /// Prior position variance when a track is seeded.
    pub initial_position_var: f64,
    /// Prior velocity variance when a track is seeded.
    pub initial_velocity_var: f64,
    /// A track is dropped after this many consecutive scans without a return.
    pub drop_after_misses: u32,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self {
            process_noise_var: 1e-5,
            measurement_noise_var: 1e-4,
            initial_position_var: 1e-4,
            initial_velocity_var: 4e-4,
            drop_after_misses: 3,
        }
    }
}

/// Gap detection, trajectory synthesis, uncertainty, and CFS parameters.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PlannerParams {
    /// Planning horizon N: waypoint count per trajectory, including the
    /// current position.
    pub horizon: usize,
    /// Inflation radius r_ins applied to sensed agents.
    pub inflation_radius: f64,
    /// Minimum tangent-angle separation for a candidate gap, radians.
    pub theta_threshold: f64,
    /// Angular spacing of virtual agents subdividing wide gaps, radians.
    pub virtual_interval: f64,
    /// Confidence level for the chi-square error bound (violation
    /// probability).
    pub epsilon: f64,
    /// Cap on the uncertainty-inflated safety distance.
    pub d_safe_max: f64,
    /// Weight on deviation from the reference trajectory.
    pub w_ref: f64,
    /// Weight on first-difference (velocity) magnitude.
    pub w_vel: f64,
    /// Weight on second-difference (acceleration) magnitude.
    pub w_acc: f64,
    /// Gain of the radial repulsion term in the gradient field.
    pub pfm_repulse_gain: f64,
    /// Gain of the circulation term in the gradient field.
    pub pfm_circulation_gain: f64,
    /// Iterate CFS to convergence instead of the single online iteration.
    /// Offline validation only.
    pub cfs_converge: bool,
    /// Score penalty applied to trajectories whose CFS QP failed.
    pub infeasible_penalty: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            horizon: 20,
            inflation_radius: 0.06,
            theta_threshold: 0.3,
            virtual_interval: 0.8,
            epsilon: 0.01,
            d_safe_max: 0.10,
            w_ref: 1.0,
            w_vel: 0.5,
            w_acc: 0.5,
            pfm_repulse_gain: 0.05,
            pfm_circulation_gain: 0.05,
            cfs_converge: false,
            infeasible_penalty: 1e6,
        }
    }
}

/// Tracking controller gains and the safety-index controller parameters.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ControllerParams {
    /// Minimum robot-agent distance defining the safe set.
    pub d_min: f64,
    /// Gain on the distance-rate term of the safety index.
    pub k_grad: f64,
    /// Convergence rate of the safety-index decrease condition.
    pub eta: f64,
    /// Per-axis control bound, units per step squared.
    pub u_max: f64,
    /// Proportional gain on position error.
    pub kp: f64,
    /// Damping gain on velocity.
    pub kd: f64,
    /// Unicycle heading proportional gain.
    pub kp_heading: f64,
    /// Unicycle heading damping gain.
    pub kd_heading: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            d_min: 0.085,
            k_grad: 2.0,
            eta: 0.5,
            u_max: 8e-3,
            kp: 1.0,
            kd: 1.0,
            kp_heading: 0.5,
            kd_heading: 1.0,
        }
    }
}

/// Complete run configuration.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct Params {
    pub scenario: ScenarioConfig,
    pub estimator: EstimatorParams,
    pub planner: PlannerParams,
    pub controller: ControllerParams,
}

impl Params {
    /// Load from a flat `key = value` file. `#` starts a comment; blank
    /// lines are ignored; unknown keys are errors.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let mut params = Params::default();
        params.apply_text(&text)?;
        params.validate()?;
        Ok(params)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or(ConfigError::Syntax {
                line,
                text: stripped.to_string(),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| match e {
                SetError::UnknownKey => ConfigError::UnknownKey {
                    line,
                    key: key.trim().to_string(),
                },
                SetError::BadValue => ConfigError::BadValue {
                    line,
                    key: key.trim().to_string(),
                    value: value.trim().to_string(),
                },
            })?;
        }
        Ok(())
    }

    /// Set one parameter by config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SetError> {
        fn f(value: &str) -> Result<f64, SetError> {
            value.parse::<f64>().map_err(|_| SetError::BadValue)
        }
        fn u(value: &str) -> Result<u64, SetError> {
            value.parse::<u64>().map_err(|_| SetError::BadValue)
        }
        fn b(value: &str) -> Result<bool, SetError> {
            value.parse::<bool>().map_err(|_| SetError::BadValue)
        }
        let s = &mut self.scenario;
        match key {
            "n_agents" => s.n_agents = u(value)? as usize,
            "world_width" => s.world_size[0] = f(value)?,
            "world_height" => s.world_size[1] = f(value)?,
            "agent_radius" => s.agent_radius = f(value)?,
            "agent_speed_min" => s.agent_speed_range[0] = f(value)?,
            "agent_speed_max" => s.agent_speed_range[1] = f(value)?,
            "robot_speed_min" => s.robot_speed_range[0] = f(value)?,
            "robot_speed_max" => s.robot_speed_range[1] = f(value)?,
            "measurement_noise_std" => s.measurement_noise_std = f(value)?,
            "sensing_range" => s.sensing_range = f(value)?,
            "step_budget" => s.step_budget = u(value)? as u32,
            "seed" => s.rng_seed = u(value)?,
            "heading_noise_std" => s.heading_noise_std = f(value)?,
            "boundary" => {
                s.boundary = match value {
                    "reflect" => BoundaryPolicy::Reflect,
                    "wrap" => BoundaryPolicy::Wrap,
                    _ => return Err(SetError::BadValue),
                }
            }
            "robot_model" => {
                s.robot_model = match value {
                    "unicycle" => RobotModel::SecondOrderUnicycle,
                    "double_integrator" => RobotModel::DoubleIntegrator,
                    _ => return Err(SetError::BadValue),
                }
            }
            "robot_start_x" => s.robot_start[0] = f(value)?,
            "robot_start_y" => s.robot_start[1] = f(value)?,
            "goal_x" => s.goal[0] = f(value)?,
            "goal_y" => s.goal[1] = f(value)?,
            "goal_radius" => s.goal_radius = f(value)?,
            "spawn_clearance" => s.spawn_clearance = f(value)?,
            "dt" => s.dt = f(value)?,
            "scan_beams" => s.scan_beams = u(value)? as usize,
            "process_noise_var" => self.estimator.process_noise_var = f(value)?,
            "measurement_noise_var" => self.estimator.measurement_noise_var = f(value)?,
            "initial_position_var" => self.estimator.initial_position_var = f(value)?,
            "initial_velocity_var" => self.estimator.initial_velocity_var = f(value)?,
            "drop_after_misses" => self.estimator.drop_after_misses = u(value)? as u32,
            "horizon" => self.planner.horizon = u(value)? as usize,
            "inflation_radius" => self.planner.inflation_radius = f(value)?,
            "theta_threshold" => self.planner.theta_threshold = f(value)?,
            "virtual_interval" => self.planner.virtual_interval = f(value)?,
            "epsilon" => self.planner.epsilon = f(value)?,
            "d_safe_max" => self.planner.d_safe_max = f(value)?,
            "w_ref" => self.planner.w_ref = f(value)?,
            "w_vel" => self.planner.w_vel = f(value)?,
            "w_acc" => self.planner.w_acc = f(value)?,
            "pfm_repulse_gain" => self.planner.pfm_repulse_gain = f(value)?,
            "pfm_circulation_gain" => self.planner.pfm_circulation_gain = f(value)?,
            "cfs_converge" => self.planner.cfs_converge = b(value)?,
            "infeasible_penalty" => self.planner.infeasible_penalty = f(value)?,
            "d_min" => self.controller.d_min = f(value)?,
            "k_grad" => self.controller.k_grad = f(value)?,
            "eta" => self.controller.eta = f(value)?,
            "u_max" => self.controller.u_max = f(value)?,
            "kp" => self.controller.kp = f(value)?,
            "kd" => self.controller.kd = f(value)?,
            "kp_heading" => self.controller.kp_heading = f(value)?,
            "kd_heading" => self.controller.kd_heading = f(value)?,
            _ => return Err(SetError::UnknownKey),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.scenario;
        let err = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if s.world_size[0] <= 0.0 || s.world_size[1] <= 0.0 {
            return err("world size must be positive");
        }
        if s.agent_radius <= 0.0 {
            return err("agent radius must be positive");
        }
        if s.agent_speed_range[0] > s.agent_speed_range[1] || s.agent_speed_range[0] < 0.0 {
            return err("agent speed range must satisfy 0 <= lo <= hi");
        }
        if s.robot_speed_range[0] > s.robot_speed_range[1] || s.robot_speed_range[0] < 0.0 {
            return err("robot speed range must satisfy 0 <= lo <= hi");
        }
        if s.measurement_noise_std < 0.0 {
            return err("measurement noise std must be nonnegative");
        }
        if s.sensing_range <= 0.0 || s.goal_radius <= 0.0 || s.dt <= 0.0 {
            return err("sensing range, goal radius, and dt must be positive");
        }
        if s.scan_beams == 0 {
            return err("scan_beams must be positive");
        }
        if self.planner.horizon < 2 {
            return err("horizon must be at least 2");
        }
        if self.planner.epsilon <= 0.0 || self.planner.epsilon >= 1.0 {
            return err("epsilon must lie in (0, 1)");
        }
        if self.planner.inflation_radius <= 0.0 {
            return err("inflation radius must be positive");
        }
        if self.planner.d_safe_max < self.planner.inflation_radius {
            return err("d_safe_max must be at least the inflation radius");
        }
        if self.controller.d_min <= 0.0
            || self.controller.eta <= 0.0
            || self.controller.k_grad <= 0.0
        {
            return err("d_min, eta, and k_grad must be positive");
        }
        if self.controller.u_max <= 0.0 {
            return err("u_max must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum SetError {
    UnknownKey,
    BadValue,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Params::default().validate().unwrap();
    }

    #[test]
    fn parse_roundtrip() {
        let mut p = Params::default();
        p.apply_text("n_agents = 50\nseed = 7 # comment\n\n# full-line comment\ntheta_threshold = 0.25\n")
            .unwrap();
        assert_eq!(p.scenario.n_agents, 50);
        assert_eq!(p.scenario.rng_seed, 7);
        assert_eq!(p.planner.theta_threshold, 0.25);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut p = Params::default();
        let e = p.apply_text("not_a_key = 3\n").unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey { .. }));
    }

    #[test]
    fn bad_value_rejected() {
        let mut p = Params::default();
        let e = p.apply_text("n_agents = many\n").unwrap_err();
        assert!(matches!(e, ConfigError::BadValue { .. }));
    }

    #[test]
    fn invalid_ranges_rejected() {
        let mut p = Params::default();
        p.scenario.agent_speed_range = [0.1, 0.05];
        assert!(p.validate().is_err());
        let mut p = Params::default();
        p.planner.epsilon = 1.5;
        assert!(p.validate().is_err());
    }
}
