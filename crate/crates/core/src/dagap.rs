//! Multi-trajectory synthesis over predicted gaps.
//!
//! Gap detection is repeated on the predicted agent positions at every
//! horizon step; one candidate trajectory per gap advances a single gradient
//! step per horizon step. Gaps that open mid-horizon branch off the nearest
//! existing trajectory; gaps that close freeze theirs. Only trajectories
//! whose gap is still open at the final step are returned, with a
//! straight-line sentinel as the fallback when nothing survives.

use crate::estimation::AgentPrediction;
use crate::gap_detect::{
    detect_gaps, inflate_positions, Flank, Gap, GapKey, GapParams, GapStatus,
};
use crate::uncertainty::SafetySchedule;
use crate::Vec2;
use std::collections::BTreeMap;
use std::io::Write;

/// One candidate trajectory, targeting one gap.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub gap_key: GapKey,
    /// Waypoints `x[0..N-1]`, world frame; `x[0]` is the robot position.
    pub waypoints: Vec<Vec2>,
    pub status: GapStatus,
    /// Filled by scoring; unscored trajectories carry NAN.
    pub score: f64,
    pub feasible: bool,
}

impl Trajectory {
    fn new(gap_key: GapKey, start: Vec2) -> Self {
        Self {
            gap_key,
            waypoints: vec![start],
            status: GapStatus::Open,
            score: f64::NAN,
            feasible: true,
        }
    }

    pub fn last(&self) -> Vec2 {
        *self.waypoints.last().expect("never empty")
    }
}

/// Planner input frozen at plan time.
#[derive(Debug, Clone)]
pub struct PlanningSnapshot {
    pub robot_position: Vec2,
    pub goal: Vec2,
    /// Per tracked agent, sorted by id; positions cover steps `1..=horizon`.
    pub predictions: Vec<AgentPrediction>,
    /// Waypoint count N per trajectory, including the current position.
    pub horizon: usize,
    pub dt: f64,
}

/// Per-agent, per-step inflation radius used during synthesis.
pub enum InflationSchedule<'a> {
    /// Constant radius for every agent and step.
    Fixed(f64),
    /// Uncertainty-adjusted `d_safe` per agent; `base` covers agents without
    /// a schedule.
    Scheduled {
        base: f64,
        schedules: &'a BTreeMap<crate::AgentId, SafetySchedule>,
    },
}

impl InflationSchedule<'_> {
    pub fn radius(&self, agent_id: crate::AgentId, step: usize) -> f64 {
        match self {
            InflationSchedule::Fixed(r) => *r,
            InflationSchedule::Scheduled { base, schedules } => schedules
                .get(&agent_id)
                .and_then(|s| s.d_safe.get(step.saturating_sub(1)))
                .copied()
                .unwrap_or(*base),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SynthesisParams {
    pub gap: GapParams,
    pub pfm_repulse_gain: f64,
    pub pfm_circulation_gain: f64,
    /// Per-step displacement bound `v_max * dt`.
    pub step_bound: f64,
}

/// Which side of a gap a flanking circle is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlankSide {
    /// Lower-bearing flank; the robot passes it clockwise.
    Lower,
    /// Upper-bearing flank; the robot passes it counterclockwise.
    Upper,
}

/// A flanking inflated circle at one prediction step, world frame.
#[derive(Debug, Clone, Copy)]
pub struct FlankCircle {
    pub center: Vec2,
    pub radius: f64,
    pub side: FlankSide,
}

/// One gradient-field step toward a gap goal.
///
/// The field is a linear pull to the goal plus, inside an influence radius
/// of twice the inflation radius around each flanking circle, a radial
/// repulsion proportional to `1/d - 1/d_infl` and a circulation term tangent
/// to the circle, signed so the robot passes through the gap. The step is
/// clamped to `step_bound`.
pub fn pfm_step(current: Vec2, gap_goal: Vec2, flanks: &[FlankCircle], p: &SynthesisParams) -> Vec2 {
    let pull = gap_goal - current;
    if pull.norm() < 1e-12 {
        return current;
    }
    let mut field = pull;
    for flank in flanks {
        if flank.radius <= 0.0 {
            continue;
        }
        let offset = current - flank.center;
        let d = offset.norm();
        let d_infl = 2.0 * flank.radius;
        if d >= d_infl || d < 1e-12 {
            continue;
        }
        let radial = offset / d;
        let falloff = 1.0 / d - 1.0 / d_infl;
        field += p.pfm_repulse_gain * falloff * radial;
        let tangent = match flank.side {
            FlankSide::Lower => Vec2::new(radial.y, -radial.x),
            FlankSide::Upper => Vec2::new(-radial.y, radial.x),
        };
        field += p.pfm_circulation_gain * falloff * tangent;
    }
    let norm = field.norm();
    let step = if norm > p.step_bound {
        field * (p.step_bound / norm)
    } else {
        field
    };
    current + step
}

fn flank_circles(
    gap: &Gap,
    step: usize,
    predictions: &BTreeMap<crate::AgentId, &AgentPrediction>,
    inflation: &InflationSchedule,
) -> Vec<FlankCircle> {
    let mut out = Vec::with_capacity(2);
    for (flank, side) in [(gap.flanks.0, FlankSide::Lower), (gap.flanks.1, FlankSide::Upper)] {
        if let Flank::Real(id) = flank {
            if let Some(pred) = predictions.get(&id) {
                if let Some(&center) = pred.positions.get(step - 1) {
                    out.push(FlankCircle {
                        center,
                        radius: inflation.radius(id, step),
                        side,
                    });
                }
            }
        }
    }
    out
}

/// Synthesize one candidate trajectory per open gap over the horizon,
/// handling gap birth and death.
pub fn synthesize(
    snapshot: &PlanningSnapshot,
    inflation: &InflationSchedule,
    params: &SynthesisParams,
) -> Vec<Trajectory> {
    synthesize_internal(snapshot, inflation, params, false)
}

fn synthesize_internal(
    snapshot: &PlanningSnapshot,
    inflation: &InflationSchedule,
    params: &SynthesisParams,
    include_closed: bool,
) -> Vec<Trajectory> {
    let n = snapshot.horizon;
    let x0 = snapshot.robot_position;
    let by_id: BTreeMap<crate::AgentId, &AgentPrediction> = snapshot
        .predictions
        .iter()
        .map(|p| (p.agent_id, p))
        .collect();

    let mut trajectories: Vec<Trajectory> = Vec::new();
    let mut active: BTreeMap<GapKey, usize> = BTreeMap::new();

    for h in 1..n {
        // Gaps on the agents as predicted at step h, viewed from the
        // current robot position.
        let centers: Vec<(Flank, Vec2)> = snapshot
            .predictions
            .iter()
            .map(|p| (Flank::Real(p.agent_id), p.positions[h - 1] - x0))
            .collect();
        let radii: Vec<f64> = snapshot
            .predictions
            .iter()
            .map(|p| inflation.radius(p.agent_id, h))
            .collect();
        let inflated = inflate_positions(&centers, &radii);
        let gaps = detect_gaps(&inflated.inflated, &params.gap, snapshot.goal - x0);
        let gap_map: BTreeMap<GapKey, &Gap> = gaps.iter().map(|g| (g.key, g)).collect();

        // Births first, then deaths: a gap that re-keys between steps can
        // clone the outgoing trajectory's prefix and continue seamlessly.
        for gap in &gaps {
            if active.contains_key(&gap.key) {
                continue;
            }
            let goal_world = x0 + gap.goal;
            let prefix = if h == 1 {
                vec![x0]
            } else {
                let nearest = active
                    .values()
                    .min_by(|&&a, &&b| {
                        let da = (trajectories[a].last() - goal_world).norm();
                        let db = (trajectories[b].last() - goal_world).norm();
                        da.partial_cmp(&db).unwrap()
                    })
                    .copied();
                match nearest {
                    Some(src) => trajectories[src].waypoints.clone(),
                    None => {
                        // No live trajectory to branch from: replay a pull
                        // toward this gap from the start.
                        let mut wps = vec![x0];
                        let flanks = flank_circles(gap, h, &by_id, inflation);
                        for _ in 1..h {
                            let next = pfm_step(*wps.last().unwrap(), goal_world, &flanks, params);
                            wps.push(next);
                        }
                        wps
                    }
                }
            };
            let mut traj = Trajectory::new(gap.key, x0);
            traj.waypoints = prefix;
            trajectories.push(traj);
            active.insert(gap.key, trajectories.len() - 1);
        }

        // Deaths: a tracked gap missing from this step's detection closes
        // its trajectory and freezes the waypoints.
        let dead: Vec<GapKey> = active
            .keys()
            .filter(|k| !gap_map.contains_key(k))
            .copied()
            .collect();
        for key in dead {
            let idx = active.remove(&key).unwrap();
            trajectories[idx].status = GapStatus::Closed;
        }

        // Advance every live trajectory one field step.
        for (key, &idx) in &active {
            let gap = gap_map[key];
            let flanks = flank_circles(gap, h, &by_id, inflation);
            let current = trajectories[idx].last();
            let next = pfm_step(current, x0 + gap.goal, &flanks, params);
            trajectories[idx].waypoints.push(next);
        }
    }

    let mut out: Vec<Trajectory> = if include_closed {
        trajectories
    } else {
        active
            .values()
            .map(|&idx| trajectories[idx].clone())
            .collect()
    };
    if out.iter().all(|t| t.status == GapStatus::Closed) || out.is_empty() {
        out.push(sentinel_trajectory(snapshot, params));
    }
    out
}

/// Straight-line fallback: a pure pull toward the goal clamped to the
/// sensing boundary, ignoring agents.
pub fn sentinel_trajectory(snapshot: &PlanningSnapshot, params: &SynthesisParams) -> Trajectory {
    let x0 = snapshot.robot_position;
    let goal_rel = snapshot.goal - x0;
    let dist = goal_rel.norm();
    let target = if dist > params.gap.d_max && dist > 0.0 {
        x0 + goal_rel * (params.gap.d_max / dist)
    } else {
        snapshot.goal
    };
    let mut traj = Trajectory::new(GapKey::Sentinel, x0);
    for _ in 1..snapshot.horizon {
        let next = pfm_step(traj.last(), target, &[], params);
        traj.waypoints.push(next);
    }
    traj
}

/// Dump a trajectory set as CSV rows `traj,step,x,y,status`.
pub fn write_trajectories_csv<W: Write>(
    out: &mut W,
    trajectories: &[Trajectory],
) -> std::io::Result<()> {
    writeln!(out, "traj,step,x,y,status")?;
    for (i, traj) in trajectories.iter().enumerate() {
        let status = match traj.status {
            GapStatus::Open => "open",
            GapStatus::Closed => "closed",
        };
        for (step, wp) in traj.waypoints.iter().enumerate() {
            writeln!(out, "{},{},{},{},{}", i, step, wp.x, wp.y, status)?;
        }
    }
    Ok(())
}
