use gapnav_core::config::{ControllerParams, RobotModel};
use gapnav_core::ssa_ctrl::{self, SafetyIndexParams, SsaConstraint};
use gapnav_core::world_sim::{step_robot, RobotState};
use gapnav_core::Vec2;

fn main() {
    let safety = SafetyIndexParams { d_min: 0.085, k_grad: 2.0, eta: 0.5 };
    let u_max = 8e-3;
    let mut robot = RobotState {
        position: Vec2::new(-0.5, 0.0),
        heading: 0.0,
        linear_speed: 0.0,
        angular_speed: 0.0,
        model: RobotModel::DoubleIntegrator,
    };
    let mut agent_pos = Vec2::new(0.0, 0.3);
    let mut agent_vel = Vec2::new(0.0, -0.004f64);
    let targets = [Vec2::new(0.5, 0.0), Vec2::new(-0.5, 0.0)];
    let mut target_idx = 0;
    let gains = ControllerParams { u_max, ..Default::default() };
    for step in 0..600 {
        if (robot.position - targets[target_idx]).norm() < 0.05 {
            target_idx = 1 - target_idx;
        }
        let u_ref = ssa_ctrl::reference_control(&robot, targets[target_idx], &gains);
        let idx = ssa_ctrl::safety_index(&robot, agent_pos, agent_vel, &safety).unwrap();
        let (u, fb) = if idx.phi >= 0.0 {
            let c = SsaConstraint { agent_id: 0, phi: idx.phi, l_f: idx.l_f, l_g: idx.l_g, rhs: -safety.eta * idx.phi };
            let res = ssa_ctrl::safe_control(u_ref, &[c], u_max);
            (res.u, res.fallback)
        } else { (u_ref, false) };
        robot = step_robot(&robot, u, 1.0, 8e-3);
        agent_pos += agent_vel;
        for axis in 0..2 {
            if agent_pos[axis].abs() > 0.3 {
                agent_vel[axis] = -agent_vel[axis];
            }
        }
        let d = (robot.position - agent_pos).norm();
        if step % 10 == 0 || d < 0.09 {
            println!("t={step:4} d={d:.4} phi={:+.5} u=({:+.4},{:+.4}) uref=({:+.4},{:+.4}) fb={fb} rp=({:+.3},{:+.3}) ap=({:+.3},{:+.3})",
                idx.phi, u.x, u.y, u_ref.x, u_ref.y, robot.position.x, robot.position.y, agent_pos.x, agent_pos.y);
        }
        if d < 0.085 { println!("VIOLATION at {step}"); break; }
    }
}
