//! Acceptance suite: every release criterion as one test, each printing a
//! pass/fail line. Run with `cargo test -p gapnav-core --test acceptance`
//! (add `-- --nocapture` to see the lines on success).

mod common;

use gapnav_core::cfs_opt::{self, CfsProblem, CfsStatus, CfsWeights, ObstacleSet};
use gapnav_core::config::{Params, RobotModel};
use gapnav_core::dagap::{self, InflationSchedule, PlanningSnapshot, SynthesisParams};
use gapnav_core::estimation::{predict, AgentEstimate, AgentPrediction};
use gapnav_core::gap_detect::{inflate_positions, Flank};
use gapnav_core::pipeline::{self, Mode, Protocol};
use gapnav_core::qp_core::{self, kkt_residuals, QpProblem, QpStatus};
use gapnav_core::ssa_ctrl::{self, SafetyIndexParams, SsaConstraint};
use gapnav_core::uncertainty::{build_schedule, chi2_bound, ConfidenceParams, SafetySchedule};
use gapnav_core::world_sim::{step_robot, RobotState};
use gapnav_core::{AgentId, Vec2};
use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {id:02} {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

/// Criterion 1: module ablation at 50 agents, 100 seeded trials per mode.
/// Strict collision-rate ordering SGap > DAGap > DAGap+CFS > full, with the
/// full pipeline at or below 10% and SGap at or above 50%.
#[test]
fn acceptance_01_ablation_ordering_50_agents() {
    let mut params = Params::default();
    params.scenario.n_agents = 50;
    let rows = pipeline::run_ablation(&params, &Mode::all(), 100, 2);
    let rate = |m: Mode| {
        rows.iter()
            .find(|r| r.mode == m)
            .map(|r| r.collision_rate)
            .unwrap()
    };
    let (sgap, dagap, cfs, full) = (
        rate(Mode::SGap),
        rate(Mode::DAGap),
        rate(Mode::DAGapCfs),
        rate(Mode::Full),
    );
    let ordered = sgap > dagap && dagap > cfs && cfs > full;
    let pass = ordered && full <= 0.10 && sgap >= 0.50;
    report(
        1,
        "ablation ordering (50 agents)",
        pass,
        &format!(
            "collision rates sgap={sgap:.2} > dagap={dagap:.2} > cfs={cfs:.2} > full={full:.2}"
        ),
    );
}

/// Criterion 2: full pipeline at 20 agents, 100 trials under the
/// continue-after-collision protocol: success >= 95%, collision <= 5%.
#[test]
fn acceptance_02_full_pipeline_20_agents() {
    let mut params = Params::default();
    params.scenario.n_agents = 20;
    let records =
        pipeline::run_trials(&params, Mode::Full, Protocol::ContinueAfterCollision, 100, 2);
    let row = pipeline::AblationRow::from_records(Mode::Full, &records);
    let pass = row.success_rate >= 0.95 && row.collision_rate <= 0.05;
    report(
        2,
        "full pipeline (20 agents)",
        pass,
        &format!(
            "success={:.2} collision={:.2}",
            row.success_rate, row.collision_rate
        ),
    );
}

/// Criterion 3: Theorem-1 coverage. 10^4 initial estimates sampled around
/// the truth, propagated over a 20-step horizon with no process noise; the
/// violation rate of the eigen-margin stays at or below 0.02 at every step.
#[test]
fn acceptance_03_margin_coverage() {
    let epsilon = 0.01;
    let k_eps = chi2_bound(epsilon, 2).unwrap();
    let horizon = 20;
    let samples = 10_000;
    let pos_var = 1e-4;
    let vel_var = 4e-4;
    let cov = Matrix4::from_diagonal(&Vector4::new(pos_var, pos_var, vel_var, vel_var));
    let est = AgentEstimate {
        agent_id: 0,
        state: Vector4::new(0.1, -0.2, 0.01, 0.005),
        covariance: cov,
        last_update_tick: 0,
    };
    let pred = predict(&est, horizon, 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_rate: f64 = 0.0;
    let mut violations = vec![0u32; horizon];
    use rand_distr::{Distribution, Normal};
    let pos_n = Normal::new(0.0, pos_var.sqrt()).unwrap();
    let vel_n = Normal::new(0.0, vel_var.sqrt()).unwrap();
    for _ in 0..samples {
        let ep = Vec2::new(pos_n.sample(&mut rng), pos_n.sample(&mut rng));
        let ev = Vec2::new(vel_n.sample(&mut rng), vel_n.sample(&mut rng));
        for i in 1..=horizon {
            let err = ep + ev * i as f64;
            let margin = gapnav_core::uncertainty::margin(&pred.covariances[i - 1], k_eps).unwrap();
            if err.norm() > margin {
                violations[i - 1] += 1;
            }
        }
    }
    for v in &violations {
        worst_rate = worst_rate.max(*v as f64 / samples as f64);
    }
    let pass = worst_rate <= epsilon + 0.01;
    report(
        3,
        "chi-square margin coverage",
        pass,
        &format!("worst per-step violation rate {worst_rate:.4} <= 0.02"),
    );
}

/// Criterion 4: chi-square bound exactness for 2 dof at four epsilon values,
/// against independently computed constants.
#[test]
fn acceptance_04_chi2_exactness() {
    // -2 ln(eps), computed independently to 16 significant digits.
    let cases = [
        (0.001, 13.815510557964274),
        (0.01, 9.210340371976184),
        (0.05, 5.991464547107982),
        (0.1, 4.605170185988091),
    ];
    let mut worst: f64 = 0.0;
    for (eps, expected) in cases {
        let got = chi2_bound(eps, 2).unwrap();
        worst = worst.max((got - expected).abs());
    }
    let pass = worst < 1e-12;
    report(
        4,
        "chi2 bound exactness",
        pass,
        &format!("max |error| {worst:.2e} < 1e-12"),
    );
}

struct CfsInstance {
    predictions: Vec<AgentPrediction>,
    schedules: BTreeMap<AgentId, SafetySchedule>,
    snapshot: PlanningSnapshot,
    synth: SynthesisParams,
    params: Params,
}

fn random_cfs_instance(rng: &mut ChaCha8Rng) -> CfsInstance {
    let params = Params::default();
    let n = params.planner.horizon;
    let n_agents = rng.random_range(3..9);
    let mut predictions = Vec::new();
    for id in 0..n_agents {
        // Agents in the forward sector at planning-realistic clearances,
        // so the straight corridor toward the goal is regularly blocked.
        let d = rng.random_range(0.12..0.3);
        let b = std::f64::consts::FRAC_PI_2 + rng.random_range(-1.0..1.0);
        let speed = rng.random_range(5e-3..2e-2);
        let vb = rng.random_range(0.0..std::f64::consts::TAU);
        let mut est = AgentEstimate {
            agent_id: id,
            state: Vector4::new(
                d * b.cos(),
                d * b.sin(),
                speed * vb.cos(),
                speed * vb.sin(),
            ),
            covariance: Matrix4::from_diagonal(&Vector4::new(4e-5, 4e-5, 6e-6, 6e-6)),
            last_update_tick: 0,
        };
        est.covariance *= rng.random_range(0.5..2.0);
        predictions.push(predict(&est, n, 1.0));
    }
    let conf = ConfidenceParams {
        epsilon: params.planner.epsilon,
        d_safe_max: params.planner.d_safe_max,
    };
    let mut schedules = BTreeMap::new();
    for pred in &predictions {
        schedules.insert(
            pred.agent_id,
            build_schedule(pred, &conf, params.planner.inflation_radius).unwrap(),
        );
    }
    let goal = Vec2::new(rng.random_range(-0.1..0.1), rng.random_range(0.6..1.0));
    let snapshot = PlanningSnapshot {
        robot_position: Vec2::zeros(),
        goal,
        predictions: predictions.clone(),
        horizon: n,
        dt: 1.0,
    };
    let synth = SynthesisParams {
        gap: gapnav_core::gap_detect::GapParams {
            inflation_radius: params.planner.inflation_radius,
            theta_threshold: params.planner.theta_threshold,
            virtual_interval: params.planner.virtual_interval,
            d_max: params.scenario.sensing_range,
        },
        pfm_repulse_gain: params.planner.pfm_repulse_gain,
        pfm_circulation_gain: params.planner.pfm_circulation_gain,
        step_bound: params.scenario.v_max(),
    };
    CfsInstance {
        predictions,
        schedules,
        snapshot,
        synth,
        params,
    }
}

/// Criterion 5: CFS safety recheck and reference-quality telemetry over 1000
/// randomized planning instances. Every feasible optimized trajectory must
/// satisfy the true keep-out constraints with zero violations, and the
/// feasibility rate with gap-synthesis references must beat straight-line
/// references by at least 10 points.
#[test]
fn acceptance_05_cfs_safety_and_feasibility_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let instances = 1000;
    let mut violations = 0u32;
    let mut feasible_dagap = 0u32;
    let mut feasible_straight = 0u32;

    for _ in 0..instances {
        let inst = random_cfs_instance(&mut rng);
        let weights = CfsWeights {
            w_ref: inst.params.planner.w_ref,
            w_vel: inst.params.planner.w_vel,
            w_acc: inst.params.planner.w_acc,
        };
        let scheduled = InflationSchedule::Scheduled {
            base: inst.params.planner.inflation_radius,
            schedules: &inst.schedules,
        };
        let candidates = dagap::synthesize(&inst.snapshot, &scheduled, &inst.synth);
        let best = cfs_opt::preselect(&candidates, inst.snapshot.goal).unwrap()[0];

        // Straight-line baseline: the pipeline's own sentinel fallback,
        // which ignores every agent.
        let straight = dagap::sentinel_trajectory(&inst.snapshot, &inst.synth).waypoints;

        for (reference, feasible_count) in [
            (&best.waypoints, &mut feasible_dagap),
            (&straight, &mut feasible_straight),
        ] {
            let problem = CfsProblem {
                reference,
                obstacles: ObstacleSet {
                    predictions: &inst.predictions,
                    schedules: &inst.schedules,
                    base_d_safe: inst.params.planner.inflation_radius,
                },
                weights,
                goal: inst.snapshot.goal,
            };
            let (waypoints, status) = cfs_opt::cfs_iterate(&problem);
            let spacing = cfs_opt::spacing_feasible(
                &waypoints,
                inst.params.scenario.v_max(),
                inst.params.scenario.dt,
            );
            let feasible = status == CfsStatus::Optimal && spacing;
            if feasible {
                *feasible_count += 1;
                // Independent recheck of the true constraints, exact.
                for i in 1..waypoints.len() {
                    for pred in &inst.predictions {
                        let d = (waypoints[i] - pred.positions[i - 1]).norm();
                        let d_safe = inst.schedules[&pred.agent_id].d_safe[i - 1];
                        if d < d_safe - 1e-9 {
                            violations += 1;
                        }
                    }
                }
            }
        }
    }
    let rate_dagap = feasible_dagap as f64 / instances as f64;
    let rate_straight = feasible_straight as f64 / instances as f64;
    let pass = violations == 0 && rate_dagap - rate_straight >= 0.10;
    report(
        5,
        "CFS safety recheck + feasibility gap",
        pass,
        &format!(
            "violations={violations}, feasibility gap {:.1}pt (gap refs {:.1}% vs straight {:.1}%)",
            (rate_dagap - rate_straight) * 100.0,
            rate_dagap * 100.0,
            rate_straight * 100.0
        ),
    );
}

/// Criterion 6a: safe-control projection KKT residuals below 1e-8 on 10^4
/// random feasible instances, with objectives matching the exhaustive
/// active-set oracle.
#[test]
fn acceptance_06a_ssa_kkt_vs_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let u_max = 8e-3;
    let mut solved = 0u32;
    let mut worst_kkt: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    while solved < 10_000 {
        let u_ref = Vec2::new(
            rng.random_range(-u_max..u_max),
            rng.random_range(-u_max..u_max),
        );
        let m = rng.random_range(1..4);
        // Anchor feasibility at a random interior point.
        let anchor = Vec2::new(
            rng.random_range(-u_max..u_max),
            rng.random_range(-u_max..u_max),
        );
        let constraints: Vec<SsaConstraint> = (0..m)
            .map(|i| {
                let g = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let slack = rng.random_range(0.0..6e-3);
                SsaConstraint {
                    agent_id: i,
                    phi: 0.1,
                    l_f: 0.0,
                    l_g: g,
                    rhs: g.dot(&anchor) + slack,
                }
            })
            .collect();
        let result = ssa_ctrl::safe_control(u_ref, &constraints, u_max);
        if result.fallback {
            continue;
        }
        solved += 1;

        // Rebuild the projection QP and compare against the oracle.
        let mut a = DMatrix::zeros(m as usize, 2);
        let mut b = DVector::zeros(m as usize);
        for (i, c) in constraints.iter().enumerate() {
            a[(i, 0)] = c.l_g.x;
            a[(i, 1)] = c.l_g.y;
            b[i] = c.rhs - c.l_f;
        }
        let problem = QpProblem::new(
            DMatrix::identity(2, 2) * 2.0,
            DVector::from_vec(vec![-2.0 * u_ref.x, -2.0 * u_ref.y]),
        )
        .with_inequalities(a, b)
        .with_bounds(
            DVector::from_element(2, -u_max),
            DVector::from_element(2, u_max),
        );
        let solution = qp_core::solve_default(&problem).unwrap();
        assert_eq!(solution.status, QpStatus::Optimal);
        worst_kkt = worst_kkt.max(kkt_residuals(&problem, &solution).max());
        let (_, oracle_obj) = common::enumerate_qp(&problem, 1e-9).expect("feasible by anchor");
        worst_gap = worst_gap.max((solution.objective - oracle_obj).abs());
        // The projection and the QP must agree.
        let diff = (result.u - Vec2::new(solution.u[0], solution.u[1])).norm();
        assert!(diff < 1e-9, "safe_control and QP disagree by {diff}");
    }
    let pass = worst_kkt < 1e-8 && worst_gap < 1e-5;
    report(
        6,
        "SSA KKT residuals vs brute-force oracle (6a)",
        pass,
        &format!("max KKT {worst_kkt:.2e} < 1e-8, max objective gap {worst_gap:.2e} < 1e-5"),
    );
}

fn continuous_derivative(state: &RobotState, u: Vec2) -> (Vec2, f64, f64, f64) {
    // Returns (position_dot, heading_dot, speed_dot, angular_dot) for the
    // continuous-time model underlying `step_robot`.
    match state.model {
        RobotModel::DoubleIntegrator => (state.velocity(), 0.0, 0.0, 0.0),
        RobotModel::SecondOrderUnicycle => {
            let h = Vec2::new(state.heading.cos(), state.heading.sin());
            (
                state.linear_speed * h,
                state.angular_speed,
                u.x,
                u.y,
            )
        }
    }
}

fn rk4_step(state: &RobotState, u: Vec2, h: f64) -> RobotState {
    // Double integrator integrates exactly; the unicycle takes one RK4 step
    // on (x, y, psi, v, omega).
    match state.model {
        RobotModel::DoubleIntegrator => {
            let v0 = state.velocity();
            let p = state.position + v0 * h + u * (0.5 * h * h);
            let v = v0 + u * h;
            RobotState {
                position: p,
                heading: if v.norm() > 1e-15 {
                    v.y.atan2(v.x)
                } else {
                    state.heading
                },
                linear_speed: v.norm(),
                angular_speed: state.angular_speed,
                model: state.model,
            }
        }
        RobotModel::SecondOrderUnicycle => {
            type S = nalgebra::SVector<f64, 5>;
            let pack = |s: &RobotState| {
                S::from_column_slice(&[
                    s.position.x,
                    s.position.y,
                    s.heading,
                    s.linear_speed,
                    s.angular_speed,
                ])
            };
            let deriv = |s: &S| {
                S::from_column_slice(&[s[3] * s[2].cos(), s[3] * s[2].sin(), s[4], u.x, u.y])
            };
            let y0 = pack(state);
            let k1 = deriv(&y0);
            let k2 = deriv(&(y0 + k1 * (h / 2.0)));
            let k3 = deriv(&(y0 + k2 * (h / 2.0)));
            let k4 = deriv(&(y0 + k3 * h));
            let y = y0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            RobotState {
                position: Vec2::new(y[0], y[1]),
                heading: y[2],
                linear_speed: y[3],
                angular_speed: y[4],
                model: state.model,
            }
        }
    }
}

/// Criterion 6b: analytic Lie derivatives match central finite differences
/// of phi along the continuous dynamics, for both robot models, within 1e-4
/// relative error.
#[test]
fn acceptance_06b_lie_derivatives_finite_difference() {
    let params = SafetyIndexParams {
        d_min: 0.085,
        k_grad: 2.0,
        eta: 0.5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut worst_rel: f64 = 0.0;
    let mut checked = 0;
    for model in [RobotModel::DoubleIntegrator, RobotModel::SecondOrderUnicycle] {
        let mut state = RobotState {
            position: Vec2::new(-0.2, 0.0),
            heading: 0.3,
            linear_speed: 0.015,
            angular_speed: 0.01,
            model,
        };
        let mut agent_pos = Vec2::new(0.1, 0.05);
        let agent_vel = Vec2::new(-0.008, 0.004);
        for step in 0..400 {
            let u = Vec2::new(
                (step as f64 * 0.37).sin() * 6e-3,
                (step as f64 * 0.59).cos() * 6e-3,
            );
            let idx = match ssa_ctrl::safety_index(&state, agent_pos, agent_vel, &params) {
                Ok(idx) => idx,
                Err(_) => break,
            };
            let analytic = idx.l_f + idx.l_g.dot(&u);
            let h = 1e-5;
            let phi_at = |s: &RobotState, t: f64| {
                ssa_ctrl::safety_index(s, agent_pos + agent_vel * t, agent_vel, &params)
                    .unwrap()
                    .phi
            };
            let fwd = rk4_step(&state, u, h);
            let bwd = rk4_step(&state, u, -h);
            let fd = (phi_at(&fwd, h) - phi_at(&bwd, -h)) / (2.0 * h);
            if analytic.abs() > 1e-8 {
                let rel = (fd - analytic).abs() / analytic.abs().max(1e-4);
                worst_rel = worst_rel.max(rel);
                checked += 1;
            }
            // March the discrete simulation to visit varied states.
            state = step_robot(&state, u, 1.0, 0.02);
            agent_pos += agent_vel;
            let _ = continuous_derivative(&state, u);
        }
    }
    let pass = worst_rel < 1e-4 && checked > 500;
    report(
        6,
        "SSA Lie derivatives vs finite differences (6b)",
        pass,
        &format!("max relative error {worst_rel:.2e} over {checked} states"),
    );
}

/// Criterion 6c: forward invariance. Single slow agent, both robot models,
/// 100 seeded rollouts of 2000 steps each with the projection feasible
/// throughout: the robot never enters d < d_min.
#[test]
fn acceptance_06c_forward_invariance() {
    let safety = SafetyIndexParams {
        d_min: 0.085,
        k_grad: 2.0,
        eta: 0.5,
    };
    let u_max = 8e-3;
    let v_patrol = 8e-3;
    let mut violations = 0u32;
    let mut infeasible = 0u32;
    for model in [RobotModel::DoubleIntegrator, RobotModel::SecondOrderUnicycle] {
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(6000 + seed);
            let mut robot = RobotState {
                position: Vec2::new(-0.5, 0.0),
                heading: 0.0,
                linear_speed: 0.0,
                angular_speed: 0.0,
                model,
            };
            // Constant-velocity agent shuttling across the patrol line, so
            // constraints activate on every crossing without ever pinning
            // the robot frontally.
            let mut agent_pos = Vec2::new(rng.random_range(-0.2..0.2), 0.3);
            let mut agent_vel = Vec2::new(0.0, -0.004);
            let targets = [Vec2::new(0.5, 0.0), Vec2::new(-0.5, 0.0)];
            let mut target_idx = 0;
            let gains = gapnav_core::config::ControllerParams {
                u_max,
                ..Default::default()
            };
            // Start safely outside both phi and phi_0 level sets.
            assert!((robot.position - agent_pos).norm() > safety.d_min);
            for _ in 0..2000 {
                if (robot.position - targets[target_idx]).norm() < 0.05 {
                    target_idx = 1 - target_idx;
                }
                let u_ref = ssa_ctrl::reference_control(&robot, targets[target_idx], &gains);
                let idx = ssa_ctrl::safety_index(&robot, agent_pos, agent_vel, &safety).unwrap();
                let u = if idx.phi >= 0.0 {
                    let c = SsaConstraint {
                        agent_id: 0,
                        phi: idx.phi,
                        l_f: idx.l_f,
                        l_g: idx.l_g,
                        rhs: -safety.eta * idx.phi,
                    };
                    let res = ssa_ctrl::safe_control(u_ref, &[c], u_max);
                    if res.fallback {
                        infeasible += 1;
                    }
                    res.u
                } else {
                    u_ref
                };
                robot = step_robot(&robot, u, 1.0, v_patrol);
                agent_pos += agent_vel;
                for axis in 0..2 {
                    if agent_pos[axis].abs() > 0.3 {
                        agent_vel[axis] = -agent_vel[axis];
                        agent_pos[axis] = agent_pos[axis].clamp(-0.3, 0.3);
                    }
                }
                if (robot.position - agent_pos).norm() < safety.d_min {
                    violations += 1;
                }
            }
        }
    }
    let pass = violations == 0 && infeasible == 0;
    report(
        6,
        "SSA forward invariance (6c)",
        pass,
        &format!("d_min violations={violations}, infeasible steps={infeasible} over 100x2000 steps"),
    );
}

/// Criterion 7: tangent geometry against the closed form on 10^4 random
/// configurations, plus rotation equivariance, both within 1e-9.
#[test]
fn acceptance_07_gap_geometry_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let d = rng.random_range(0.05..1.5);
        let r = rng.random_range(0.01..0.9 * d);
        let bearing = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let center = d * Vec2::new(bearing.cos(), bearing.sin());
        let res = inflate_positions(&[(Flank::Real(0), center)], &[r]);
        let a = &res.inflated[0];
        let half = (r / d).asin();
        let range = (d * d - r * r).sqrt();
        worst = worst.max(gapnav_core::wrap_angle(a.left_tangent.angle - bearing - half).abs());
        worst = worst.max(gapnav_core::wrap_angle(a.right_tangent.angle - bearing + half).abs());
        worst = worst.max((a.left_tangent.range - range).abs());
        worst = worst.max((a.right_tangent.range - range).abs());
    }

    // Rotation equivariance of the tangent geometry.
    let mut worst_rot: f64 = 0.0;
    for _ in 0..2_000 {
        let d = rng.random_range(0.1..1.2);
        let r = rng.random_range(0.01..0.5 * d);
        let bearing = rng.random_range(0.0..std::f64::consts::TAU);
        let alpha = rng.random_range(0.0..std::f64::consts::TAU);
        let center = d * Vec2::new(bearing.cos(), bearing.sin());
        let rot = nalgebra::Rotation2::new(alpha);
        let a = inflate_positions(&[(Flank::Real(0), center)], &[r]).inflated[0].clone();
        let b = inflate_positions(&[(Flank::Real(0), rot * center)], &[r]).inflated[0].clone();
        worst_rot = worst_rot
            .max(gapnav_core::wrap_angle(b.left_tangent.angle - a.left_tangent.angle - alpha).abs());
        worst_rot = worst_rot.max(
            gapnav_core::wrap_angle(b.right_tangent.angle - a.right_tangent.angle - alpha).abs(),
        );
        worst_rot = worst_rot.max((b.left_tangent.range - a.left_tangent.range).abs());
    }
    let pass = worst < 1e-9 && worst_rot < 1e-9;
    report(
        7,
        "gap geometry closed form + equivariance",
        pass,
        &format!("max closed-form error {worst:.2e}, max equivariance error {worst_rot:.2e}"),
    );
}

/// Criterion 8: determinism. Identical specs reproduce identical outcome
/// rows (timings excluded); serial and 8-worker runs agree.
#[test]
fn acceptance_08_determinism() {
    let mut params = Params::default();
    params.scenario.n_agents = 30;
    params.scenario.rng_seed = 808;
    let stripped = |records: &[pipeline::RunRecord]| -> Vec<String> {
        records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.timings = Default::default();
                serde_json::to_string(&r).unwrap()
            })
            .collect()
    };
    let a = stripped(&pipeline::run_trials(
        &params,
        Mode::Full,
        Protocol::StopOnCollision,
        24,
        1,
    ));
    let b = stripped(&pipeline::run_trials(
        &params,
        Mode::Full,
        Protocol::StopOnCollision,
        24,
        8,
    ));
    let c = stripped(&pipeline::run_trials(
        &params,
        Mode::Full,
        Protocol::StopOnCollision,
        24,
        1,
    ));
    let pass = a == b && a == c;
    report(
        8,
        "determinism (rerun + workers)",
        pass,
        &format!("24 trials, serial == rerun: {}, serial == 8 workers: {}", a == c, a == b),
    );
}

/// Criterion 9: performance sanity on a 50-agent run: per-plan synthesis +
/// optimization below 250 ms and per-step safe control below 10 ms.
#[test]
fn acceptance_09_performance_sanity() {
    let mut params = Params::default();
    params.scenario.n_agents = 50;
    params.scenario.rng_seed = 909;
    let records = pipeline::run_trials(&params, Mode::Full, Protocol::StopOnCollision, 10, 1);
    let report_t = gapnav_core::harness::report_timings(&records).unwrap();
    let plan_ms = report_t.mean_dagap_ms + report_t.mean_cfs_ms;
    let ssa_ms = report_t.mean_ssa_ms;
    let pass = plan_ms < 250.0 && ssa_ms < 10.0;
    report(
        9,
        "performance sanity",
        pass,
        &format!("mean plan {plan_ms:.3} ms < 250, mean safe-control step {ssa_ms:.4} ms < 10"),
    );
}
