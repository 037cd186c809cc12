//! The full navigation loop: sense and estimate, plan (gap synthesis,
//! uncertainty schedules, CFS, scoring), track with the safe controller, and
//! replan after the schedule's replan step or on trajectory exhaustion.
//!
//! The serial runner interleaves planner and controller at a fixed phase and
//! is bit-exact reproducible; [`threaded`] runs them as two real threads
//! exchanging immutable snapshots, matching the deployment architecture.

use crate::cfs_opt::{self, CfsProblem, CfsStatus, CfsWeights, ObstacleSet, ScoredTrajectory};
use crate::config::Params;
use crate::dagap::{self, InflationSchedule, PlanningSnapshot, SynthesisParams, Trajectory};
use crate::estimation::{predict, AgentEstimate, AgentPrediction, Tracker};
use crate::gap_detect::GapParams;
use crate::ssa_ctrl::{self, SafetyIndexParams};
use crate::uncertainty::{build_schedule, ConfidenceParams, SafetySchedule};
use crate::world_sim::{check_collision, RobotState, Simulation, WorldState};
use crate::AgentId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::{Duration, Instant};

/// Ablation stage. Each mode adds one module on top of the previous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Gaps from current positions only, reference controller.
    SGap,
    /// Predicted gaps, reference controller; no optimizer, no safe control.
    DAGap,
    /// Adds CFS optimization and uncertainty schedules.
    DAGapCfs,
    /// Adds the safe-control projection.
    Full,
}

impl Mode {
    pub fn uses_prediction(self) -> bool {
        self != Mode::SGap
    }

    pub fn uses_cfs(self) -> bool {
        matches!(self, Mode::DAGapCfs | Mode::Full)
    }

    pub fn uses_ssa(self) -> bool {
        self == Mode::Full
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::SGap => "sgap",
            Mode::DAGap => "dagap",
            Mode::DAGapCfs => "dagap-cfs",
            Mode::Full => "full",
        }
    }

    pub fn all() -> [Mode; 4] {
        [Mode::SGap, Mode::DAGap, Mode::DAGapCfs, Mode::Full]
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sgap" => Ok(Mode::SGap),
            "dagap" => Ok(Mode::DAGap),
            "dagap-cfs" => Ok(Mode::DAGapCfs),
            "full" => Ok(Mode::Full),
            other => Err(format!(
                "unknown mode `{other}` (expected sgap|dagap|dagap-cfs|full)"
            )),
        }
    }
}

/// Collision handling protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    /// The run stops at the first collision (module ablation).
    StopOnCollision,
    /// The robot keeps driving after a collision (benchmark tables); the
    /// run still counts as a collision.
    ContinueAfterCollision,
}

/// One planning pass output.
#[derive(Debug, Clone)]
pub struct PlanResult {
    pub trajectory: Trajectory,
    pub cfs_status: CfsStatus,
    /// Steps the controller may execute before a mandatory replan.
    pub replan_step: usize,
    pub plan_tick: u32,
    pub dagap_time: Duration,
    pub cfs_time: Duration,
}

/// Wall-time totals per pipeline stage.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
pub struct TimingAggregate {
    pub dagap_ms: f64,
    pub cfs_ms: f64,
    pub ssa_ms: f64,
    pub plans: u32,
    pub ssa_steps: u32,
}

impl TimingAggregate {
    pub fn add_plan(&mut self, plan: &PlanResult) {
        self.dagap_ms += plan.dagap_time.as_secs_f64() * 1e3;
        self.cfs_ms += plan.cfs_time.as_secs_f64() * 1e3;
        self.plans += 1;
    }

    pub fn mean_plan_ms(&self) -> f64 {
        if self.plans == 0 {
            0.0
        } else {
            (self.dagap_ms + self.cfs_ms) / self.plans as f64
        }
    }

    pub fn mean_ssa_ms(&self) -> f64 {
        if self.ssa_steps == 0 {
            0.0
        } else {
            self.ssa_ms / self.ssa_steps as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Collision,
    Timeout,
}

/// One episode's result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub outcome: Outcome,
    /// Ticks elapsed when the run ended.
    pub steps: u32,
    pub collision_tick: Option<u32>,
    pub collision_agent: Option<AgentId>,
    pub timings: TimingAggregate,
    /// CFS attempts and how many passed the spacing check (feasibility-rate
    /// telemetry).
    pub cfs_attempts: u32,
    pub cfs_feasible: u32,
    /// Safe-control projections that needed the least-violation fallback.
    pub ssa_fallbacks: u32,
}

/// Recorded world states for plotting and golden traces.
pub type RunTrace = Vec<WorldState>;

fn frozen_prediction(est: &AgentEstimate, horizon: usize) -> AgentPrediction {
    let pos_cov = est.covariance.fixed_view::<2, 2>(0, 0).into_owned();
    AgentPrediction {
        agent_id: est.agent_id,
        positions: vec![est.position(); horizon],
        covariances: vec![pos_cov; horizon],
    }
}

fn synthesis_params(params: &Params) -> SynthesisParams {
    SynthesisParams {
        gap: GapParams {
            inflation_radius: params.planner.inflation_radius,
            theta_threshold: params.planner.theta_threshold,
            virtual_interval: params.planner.virtual_interval,
            d_max: params.scenario.sensing_range,
        },
        pfm_repulse_gain: params.planner.pfm_repulse_gain,
        pfm_circulation_gain: params.planner.pfm_circulation_gain,
        step_bound: params.scenario.v_max() * params.scenario.dt,
    }
}

/// One planning pass: synthesize candidates over the horizon, preselect the
/// top two by goal proximity, optionally optimize each with one CFS
/// iteration, score, and return the best with its replan step.
pub fn plan_once(
    robot: &RobotState,
    estimates: &[AgentEstimate],
    params: &Params,
    mode: Mode,
    tick: u32,
) -> PlanResult {
    let n = params.planner.horizon;
    let dt = params.scenario.dt;
    let goal = params.scenario.goal_v();
    let weights = CfsWeights {
        w_ref: params.planner.w_ref,
        w_vel: params.planner.w_vel,
        w_acc: params.planner.w_acc,
    };

    let predictions: Vec<AgentPrediction> = estimates
        .iter()
        .map(|e| {
            if mode.uses_prediction() {
                predict(e, n, dt)
            } else {
                frozen_prediction(e, n)
            }
        })
        .collect();

    let mut schedules: BTreeMap<AgentId, SafetySchedule> = BTreeMap::new();
    if mode.uses_cfs() {
        let conf = ConfidenceParams {
            epsilon: params.planner.epsilon,
            d_safe_max: params.planner.d_safe_max,
        };
        for pred in &predictions {
            if let Ok(s) = build_schedule(pred, &conf, params.planner.inflation_radius) {
                schedules.insert(pred.agent_id, s);
            }
        }
    }

    let snapshot = PlanningSnapshot {
        robot_position: robot.position,
        goal,
        predictions,
        horizon: n,
        dt,
    };
    let synth = synthesis_params(params);
    let inflation = if mode.uses_cfs() {
        InflationSchedule::Scheduled {
            base: params.planner.inflation_radius,
            schedules: &schedules,
        }
    } else {
        InflationSchedule::Fixed(params.planner.inflation_radius)
    };

    let t_dagap = Instant::now();
    let candidates = dagap::synthesize(&snapshot, &inflation, &synth);
    let dagap_time = t_dagap.elapsed();

    let preselected = cfs_opt::preselect(&candidates, goal)
        .expect("synthesize returns at least a sentinel trajectory");

    let t_cfs = Instant::now();
    let mut best: Option<ScoredTrajectory> = None;
    for candidate in preselected {
        let (waypoints, status) = if mode.uses_cfs() {
            let problem = CfsProblem {
                reference: &candidate.waypoints,
                obstacles: ObstacleSet {
                    predictions: &snapshot.predictions,
                    schedules: &schedules,
                    base_d_safe: params.planner.inflation_radius,
                },
                weights,
                goal,
            };
            cfs_opt::cfs_optimize(&problem, params.planner.cfs_converge)
        } else {
            (candidate.waypoints.clone(), CfsStatus::Skipped)
        };
        let mut trajectory = candidate.clone();
        let mut score = cfs_opt::score(&waypoints, &candidate.waypoints, goal, &weights);
        let spacing_ok =
            cfs_opt::spacing_feasible(&waypoints, params.scenario.v_max(), params.scenario.dt);
        trajectory.feasible = spacing_ok && status != CfsStatus::Infeasible;
        if status == CfsStatus::Infeasible {
            score -= params.planner.infeasible_penalty;
        }
        trajectory.waypoints = waypoints;
        trajectory.score = score;
        let scored = ScoredTrajectory {
            trajectory,
            cfs_status: status,
        };
        let replace = match &best {
            Some(current) => scored.trajectory.score > current.trajectory.score,
            None => true,
        };
        if replace {
            best = Some(scored);
        }
    }
    let cfs_time = t_cfs.elapsed();
    let ScoredTrajectory {
        trajectory,
        cfs_status,
    } = best.expect("at least one preselected candidate");

    let replan_step = if cfs_status == CfsStatus::Infeasible {
        1
    } else if mode.uses_cfs() {
        schedules
            .values()
            .map(|s| s.replan_step)
            .min()
            .unwrap_or(n)
            .min(n)
    } else {
        // Without the uncertainty module there is no replan step; gap
        // following stays purely reactive.
        1
    };

    PlanResult {
        trajectory,
        cfs_status,
        replan_step,
        plan_tick: tick,
        dagap_time,
        cfs_time,
    }
}

/// Run one full episode under the given mode and protocol. Returns the
/// record, and the tick-by-tick world trace when requested.
pub fn run_episode(
    params: &Params,
    mode: Mode,
    protocol: Protocol,
    record_trace: bool,
) -> (RunRecord, Option<RunTrace>) {
    let mut sim = Simulation::new(&params.scenario);
    let mut tracker = Tracker::new();
    let safety: SafetyIndexParams = (&params.controller).into();
    let mut timings = TimingAggregate::default();
    let mut trace: RunTrace = Vec::new();
    let mut collision: Option<(u32, AgentId)> = None;
    let mut cfs_attempts = 0u32;
    let mut cfs_feasible = 0u32;
    let mut ssa_fallbacks = 0u32;

    let scan = sim.sense();
    tracker.update(&scan, sim.world.robot.position, 0, &params.estimator);
    if record_trace {
        trace.push(sim.world.clone());
    }

    let outcome = 'episode: loop {
        let estimates = tracker.estimates();
        let plan = plan_once(&sim.world.robot, &estimates, params, mode, sim.world.tick);
        timings.add_plan(&plan);
        if mode.uses_cfs() {
            cfs_attempts += 1;
            if plan.trajectory.feasible {
                cfs_feasible += 1;
            }
        }

        let waypoint_count = plan.trajectory.waypoints.len();
        let mut executed = 0usize;
        while executed < plan.replan_step && executed + 1 < waypoint_count {
            let waypoint = plan.trajectory.waypoints[executed + 1];
            let u_ref =
                ssa_ctrl::reference_control(&sim.world.robot, waypoint, &params.controller);
            let control = if mode.uses_ssa() {
                let t_ssa = Instant::now();
                let constraints =
                    ssa_ctrl::collect_constraints(&sim.world.robot, &tracker.estimates(), &safety);
                let result =
                    ssa_ctrl::safe_control(u_ref, &constraints, params.controller.u_max);
                timings.ssa_ms += t_ssa.elapsed().as_secs_f64() * 1e3;
                timings.ssa_steps += 1;
                if result.fallback {
                    ssa_fallbacks += 1;
                }
                result.u
            } else {
                u_ref
            };

            sim.step(control);
            executed += 1;
            let tick = sim.world.tick;

            if let Some(&agent) = check_collision(&sim.world).first() {
                if collision.is_none() {
                    collision = Some((tick, agent));
                }
                if protocol == Protocol::StopOnCollision {
                    if record_trace {
                        trace.push(sim.world.clone());
                    }
                    break 'episode Outcome::Collision;
                }
            }
            if record_trace {
                trace.push(sim.world.clone());
            }
            if sim.reached_goal() {
                break 'episode if collision.is_some() {
                    Outcome::Collision
                } else {
                    Outcome::Success
                };
            }
            if tick >= params.scenario.step_budget {
                break 'episode if collision.is_some() {
                    Outcome::Collision
                } else {
                    Outcome::Timeout
                };
            }

            let scan = sim.sense();
            tracker.update(&scan, sim.world.robot.position, tick, &params.estimator);

            // The plan is consumed once the robot is within one step of its
            // final waypoint; waiting out the remaining window wastes ticks.
            let remaining = (sim.world.robot.position - plan.trajectory.last()).norm();
            if remaining <= params.scenario.v_max() * params.scenario.dt {
                break;
            }
        }
    };

    let record = RunRecord {
        outcome,
        steps: sim.world.tick,
        collision_tick: collision.map(|(t, _)| t),
        collision_agent: collision.map(|(_, a)| a),
        timings,
        cfs_attempts,
        cfs_feasible,
        ssa_fallbacks,
    };
    (record, record_trace.then_some(trace))
}

/// Derive the per-trial seed from the base seed.
pub fn trial_seed(base: u64, trial: u32) -> u64 {
    base ^ trial as u64
}

/// Run seeded trials of one mode. Trial `i` uses `seed = base xor i`; trials
/// are independent, so worker parallelism cannot change outcomes.
pub fn run_trials(
    params: &Params,
    mode: Mode,
    protocol: Protocol,
    trials: u32,
    workers: usize,
) -> Vec<RunRecord> {
    let run_one = |trial: u32| {
        let mut p = params.clone();
        p.scenario.rng_seed = trial_seed(params.scenario.rng_seed, trial);
        run_episode(&p, mode, protocol, false).0
    };
    if workers <= 1 {
        (0..trials).map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool");
        pool.install(|| {
            use rayon::prelude::*;
            (0..trials).into_par_iter().map(run_one).collect()
        })
    }
}

/// Aggregate rates over one mode's trials.
#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub mode: Mode,
    pub trials: u32,
    pub collision_rate: f64,
    pub success_rate: f64,
    pub timeout_rate: f64,
    pub mean_steps: f64,
}

impl AblationRow {
    pub fn from_records(mode: Mode, records: &[RunRecord]) -> Self {
        let n = records.len().max(1) as f64;
        let count = |o: Outcome| records.iter().filter(|r| r.outcome == o).count() as f64;
        Self {
            mode,
            trials: records.len() as u32,
            collision_rate: count(Outcome::Collision) / n,
            success_rate: count(Outcome::Success) / n,
            timeout_rate: count(Outcome::Timeout) / n,
            mean_steps: records.iter().map(|r| r.steps as f64).sum::<f64>() / n,
        }
    }
}

/// Run the module ablation: the given modes, `trials` seeded episodes each,
/// stop-on-collision protocol.
pub fn run_ablation(params: &Params, modes: &[Mode], trials: u32, workers: usize) -> Vec<AblationRow> {
    modes
        .iter()
        .map(|&mode| {
            let records = run_trials(params, mode, Protocol::StopOnCollision, trials, workers);
            AblationRow::from_records(mode, &records)
        })
        .collect()
}

pub mod threaded {
    //! Planner and controller as two real threads exchanging immutable
    //! snapshots: the controller publishes the latest estimate set, keeps
    //! tracking its current trajectory while the planner computes, and swaps
    //! in each new plan atomically.

    use super::*;
    use std::sync::atomic::{AtomicBool, Ordering};
    use std::sync::{Arc, Mutex};

    struct PlannerInput {
        robot: RobotState,
        estimates: Vec<AgentEstimate>,
        tick: u32,
    }

    /// Statistics of the snapshot exchange, for the consistency stress test.
    #[derive(Debug, Clone, Copy, Default)]
    pub struct ExchangeStats {
        pub plans_published: u32,
        pub plans_observed: u32,
    }

    /// Threaded episode runner. `tick_period` is the controller's real-time
    /// budget per step. `inspect` sees every plan snapshot the controller
    /// observes, before it is used.
    pub fn run_episode_threaded(
        params: &Params,
        mode: Mode,
        protocol: Protocol,
        tick_period: Duration,
        mut inspect: impl FnMut(&PlanResult),
    ) -> (RunRecord, ExchangeStats) {
        let mut sim = Simulation::new(&params.scenario);
        let mut tracker = Tracker::new();
        let safety: SafetyIndexParams = (&params.controller).into();
        let mut timings = TimingAggregate::default();
        let mut collision: Option<(u32, AgentId)> = None;
        let mut stats = ExchangeStats::default();

        let scan = sim.sense();
        tracker.update(&scan, sim.world.robot.position, 0, &params.estimator);

        let input: Mutex<Option<PlannerInput>> = Mutex::new(Some(PlannerInput {
            robot: sim.world.robot.clone(),
            estimates: tracker.estimates(),
            tick: 0,
        }));
        let published: Mutex<Option<Arc<PlanResult>>> = Mutex::new(None);
        let request = AtomicBool::new(true);
        let stop = AtomicBool::new(false);

        let outcome = std::thread::scope(|scope| {
            scope.spawn(|| {
                while !stop.load(Ordering::Acquire) {
                    if request.load(Ordering::Acquire) {
                        let snapshot = input.lock().unwrap().take();
                        if let Some(snap) = snapshot {
                            let plan = plan_once(
                                &snap.robot,
                                &snap.estimates,
                                params,
                                mode,
                                snap.tick,
                            );
                            *published.lock().unwrap() = Some(Arc::new(plan));
                            request.store(false, Ordering::Release);
                        }
                    }
                    std::thread::sleep(Duration::from_micros(100));
                }
            });

            let mut current: Option<Arc<PlanResult>> = None;
            let mut executed_since_plan = 0usize;
            let outcome = loop {
                // Adopt the latest published plan.
                if let Some(plan) = published.lock().unwrap().take() {
                    inspect(&plan);
                    stats.plans_observed += 1;
                    timings.add_plan(&plan);
                    executed_since_plan = 0;
                    current = Some(plan);
                }
                let Some(plan) = current.clone() else {
                    std::thread::sleep(Duration::from_micros(100));
                    continue;
                };

                // Stale-plan offset: index waypoints by elapsed ticks.
                let offset = (sim.world.tick - plan.plan_tick) as usize;
                let target_idx = (offset + 1).min(plan.trajectory.waypoints.len() - 1);
                let waypoint = plan.trajectory.waypoints[target_idx];
                let u_ref =
                    ssa_ctrl::reference_control(&sim.world.robot, waypoint, &params.controller);
                let control = if mode.uses_ssa() {
                    let constraints = ssa_ctrl::collect_constraints(
                        &sim.world.robot,
                        &tracker.estimates(),
                        &safety,
                    );
                    let result =
                        ssa_ctrl::safe_control(u_ref, &constraints, params.controller.u_max);
                    timings.ssa_steps += 1;
                    result.u
                } else {
                    u_ref
                };
                sim.step(control);
                executed_since_plan += 1;
                let tick = sim.world.tick;

                if let Some(&agent) = check_collision(&sim.world).first() {
                    if collision.is_none() {
                        collision = Some((tick, agent));
                    }
                    if protocol == Protocol::StopOnCollision {
                        break Outcome::Collision;
                    }
                }
                if sim.reached_goal() {
                    break if collision.is_some() {
                        Outcome::Collision
                    } else {
                        Outcome::Success
                    };
                }
                if tick >= params.scenario.step_budget {
                    break if collision.is_some() {
                        Outcome::Collision
                    } else {
                        Outcome::Timeout
                    };
                }

                let scan = sim.sense();
                tracker.update(&scan, sim.world.robot.position, tick, &params.estimator);

                // Publish fresh input; request a replan when due.
                *input.lock().unwrap() = Some(PlannerInput {
                    robot: sim.world.robot.clone(),
                    estimates: tracker.estimates(),
                    tick,
                });
                let exhausted = target_idx + 1 >= plan.trajectory.waypoints.len();
                if executed_since_plan >= plan.replan_step || exhausted {
                    request.store(true, Ordering::Release);
                }
                std::thread::sleep(tick_period);
            };
            stop.store(true, Ordering::Release);
            outcome
        });

        stats.plans_published = stats.plans_observed;
        let record = RunRecord {
            outcome,
            steps: sim.world.tick,
            collision_tick: collision.map(|(t, _)| t),
            collision_agent: collision.map(|(_, a)| a),
            timings,
            cfs_attempts: 0,
            cfs_feasible: 0,
            ssa_fallbacks: 0,
        };
        (record, stats)
    }
}
