//! Inflated-agent gap detection.
//!
//! Sensed agents are inflated so the robot can be treated as a point; the
//! tangent points from the robot to each inflated circle bound the free
//! cones between consecutive agents. A candidate gap between the
//! clockwise-previous agent and the clockwise-next agent must clear both a
//! range-difference and an angle-difference threshold. Wide gaps are split
//! by zero-radius virtual agents placed at the sensing boundary so every
//! candidate stays a locally passable cone; with zero or one agent in range
//! the detector falls back to a sentinel gap straight toward the goal.
//!
//! All geometry is robot-relative (robot at the origin).

use crate::estimation::AgentEstimate;
use crate::{wrap_angle, wrap_angle_positive, AgentId, Vec2};

/// How far a virtual bearing is quantized when used as a gap key. Coarse
/// buckets keep sub-gap identities stable while their flanking cones drift.
const VIRTUAL_KEY_QUANTUM: f64 = 0.4;
/// Fraction by which a gap goal is pulled toward the global-goal bearing
/// when that bearing lies inside the gap.
const GOAL_BIAS: f64 = 0.3;

/// One flank of a gap: a tracked agent or a virtual subdivision marker
/// (keyed by quantized bearing bucket).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Flank {
    Real(AgentId),
    Virtual(i32),
}

/// Tangent point in polar form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentPoint {
    pub angle: f64,
    pub range: f64,
}

impl TangentPoint {
    pub fn position(&self) -> Vec2 {
        self.range * Vec2::new(self.angle.cos(), self.angle.sin())
    }
}

/// An agent inflated to `inflation_radius`, with the robot's tangent points.
/// The left tangent is counterclockwise of the center bearing, the right
/// tangent clockwise.
#[derive(Debug, Clone)]
pub struct InflatedAgent {
    pub flank: Flank,
    /// Robot-relative center.
    pub center: Vec2,
    pub inflation_radius: f64,
    pub left_tangent: TangentPoint,
    pub right_tangent: TangentPoint,
}

impl InflatedAgent {
    pub fn bearing(&self) -> f64 {
        self.center.y.atan2(self.center.x)
    }

    /// Half-angle subtended by the inflated circle.
    pub fn half_angle(&self) -> f64 {
        (self.inflation_radius / self.center.norm()).min(1.0).asin()
    }
}

/// Inflation output: agents with valid tangent geometry, plus the ids of
/// agents already inside their inflation radius (left to the safe
/// controller).
#[derive(Debug, Clone, Default)]
pub struct InflateResult {
    pub inflated: Vec<InflatedAgent>,
    pub violating: Vec<AgentId>,
}

/// Inflate robot-relative centers. `radii[i]` is the inflation radius of
/// `centers[i]`.
pub fn inflate_positions(centers: &[(Flank, Vec2)], radii: &[f64]) -> InflateResult {
    assert_eq!(centers.len(), radii.len(), "radius per agent");
    let mut out = InflateResult::default();
    for (&(flank, center), &radius) in centers.iter().zip(radii) {
        let dist = center.norm();
        if dist <= radius {
            if let Flank::Real(id) = flank {
                out.violating.push(id);
            }
            continue;
        }
        let bearing = center.y.atan2(center.x);
        let half = (radius / dist).asin();
        let tangent_range = (dist * dist - radius * radius).sqrt();
        out.inflated.push(InflatedAgent {
            flank,
            center,
            inflation_radius: radius,
            left_tangent: TangentPoint {
                angle: wrap_angle(bearing + half),
                range: tangent_range,
            },
            right_tangent: TangentPoint {
                angle: wrap_angle(bearing - half),
                range: tangent_range,
            },
        });
    }
    out
}

/// Inflate tracked agents around the robot.
pub fn inflate(estimates: &[AgentEstimate], robot_position: Vec2, radii: &[f64]) -> InflateResult {
    let centers: Vec<(Flank, Vec2)> = estimates
        .iter()
        .map(|e| (Flank::Real(e.agent_id), e.position() - robot_position))
        .collect();
    inflate_positions(&centers, radii)
}

/// Stable identity of a gap across re-detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GapKey {
    /// Ordered pair: (lower-bearing flank, upper-bearing flank).
    Pair(Flank, Flank),
    /// Straight-line fallback toward the goal.
    Sentinel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapStatus {
    Open,
    Closed,
}

/// A passable free-space cone between two flanking agents.
#[derive(Debug, Clone)]
pub struct Gap {
    pub key: GapKey,
    /// Left tangent point of the lower-bearing agent: the clockwise edge of
    /// the cone.
    pub left: TangentPoint,
    /// Right tangent point of the upper-bearing agent: the counterclockwise
    /// edge of the cone.
    pub right: TangentPoint,
    /// (lower-bearing flank, upper-bearing flank).
    pub flanks: (Flank, Flank),
    pub status: GapStatus,
    /// Robot-relative gap goal.
    pub goal: Vec2,
}

impl Gap {
    /// Angular width of the free cone.
    pub fn width(&self) -> f64 {
        wrap_angle_positive(self.right.angle - self.left.angle)
    }

    pub fn is_sentinel(&self) -> bool {
        self.key == GapKey::Sentinel
    }
}

/// Gap detection thresholds.
#[derive(Debug, Clone, Copy)]
pub struct GapParams {
    /// Base inflation radius r_ins, used by the range-difference condition.
    pub inflation_radius: f64,
    pub theta_threshold: f64,
    pub virtual_interval: f64,
    /// Sensing radius: virtual agents sit on this circle and the sentinel
    /// goal is clamped to it.
    pub d_max: f64,
}

/// Gap goal: the angular midpoint of the cone at the nearer endpoint range,
/// pulled 30% toward the global-goal bearing when that bearing lies inside
/// the cone. Sentinel gaps aim straight at the goal, clamped to the sensing
/// boundary.
pub fn gap_goal(gap: &Gap, goal_rel: Vec2, d_max: f64) -> Vec2 {
    if gap.is_sentinel() {
        let dist = goal_rel.norm();
        if dist > d_max && dist > 0.0 {
            return goal_rel * (d_max / dist);
        }
        return goal_rel;
    }
    let width = gap.width();
    let mut angle = wrap_angle(gap.left.angle + 0.5 * width);
    let goal_bearing = goal_rel.y.atan2(goal_rel.x);
    if wrap_angle_positive(goal_bearing - gap.left.angle) < width {
        angle = wrap_angle(angle + GOAL_BIAS * wrap_angle(goal_bearing - angle));
    }
    let range = gap.left.range.min(gap.right.range);
    range * Vec2::new(angle.cos(), angle.sin())
}

fn sentinel_gap(goal_rel: Vec2, d_max: f64) -> Gap {
    let bearing = if goal_rel.norm() > 1e-12 {
        goal_rel.y.atan2(goal_rel.x)
    } else {
        0.0
    };
    let endpoint = TangentPoint {
        angle: bearing,
        range: d_max,
    };
    let mut gap = Gap {
        key: GapKey::Sentinel,
        left: endpoint,
        right: endpoint,
        flanks: (Flank::Virtual(0), Flank::Virtual(0)),
        status: GapStatus::Open,
        goal: Vec2::zeros(),
    };
    gap.goal = gap_goal(&gap, goal_rel, d_max);
    gap
}

fn virtual_key(bearing: f64) -> Flank {
    Flank::Virtual((wrap_angle_positive(bearing) / VIRTUAL_KEY_QUANTUM).round() as i32)
}

/// Zero-radius marker on the sensing boundary; its tangents collapse to its
/// bearing.
fn virtual_agent(bearing: f64, d_max: f64) -> InflatedAgent {
    let tp = TangentPoint {
        angle: wrap_angle(bearing),
        range: d_max,
    };
    InflatedAgent {
        flank: virtual_key(bearing),
        center: d_max * Vec2::new(bearing.cos(), bearing.sin()),
        inflation_radius: 0.0,
        left_tangent: tp,
        right_tangent: tp,
    }
}

/// Detect candidate gaps from inflated agents.
///
/// A circular clockwise pass pairs each agent's right tangent with the next
/// agent's left tangent; the pair is a candidate gap iff both the range
/// condition `|L_l(next) - L_r(prev)| > 2 r_ins` and the angle condition
/// `width > theta_threshold` hold. Free cones wider than `virtual_interval`
/// are split into passable sub-gaps by `floor(width / virtual_interval)`
/// evenly spaced virtual agents, qualifying or not. Zero or one agent
/// yields the sentinel gap.
pub fn detect_gaps(inflated: &[InflatedAgent], params: &GapParams, goal_rel: Vec2) -> Vec<Gap> {
    if inflated.len() <= 1 {
        return vec![sentinel_gap(goal_rel, params.d_max)];
    }
    let mut sorted: Vec<&InflatedAgent> = inflated.iter().collect();
    sorted.sort_by(|a, b| {
        wrap_angle_positive(a.bearing())
            .partial_cmp(&wrap_angle_positive(b.bearing()))
            .unwrap()
            .then_with(|| a.flank.cmp(&b.flank))
    });

    let mut gaps = Vec::new();
    let n = sorted.len();
    for i in 0..n {
        let lower = sorted[i];
        let upper = sorted[(i + 1) % n];
        // Free-cone width via center separation, so wrap-around cannot fake
        // a gap out of overlapping cones.
        let center_delta = wrap_angle_positive(upper.bearing() - lower.bearing());
        let width = center_delta - lower.half_angle() - upper.half_angle();
        if width <= 0.0 {
            continue;
        }
        let range_diff = (lower.left_tangent.range - upper.right_tangent.range).abs();
        let qualifying =
            range_diff > 2.0 * params.inflation_radius && width > params.theta_threshold;
        // Wide open cones get split into passable sub-gaps by virtual agents
        // whether or not the flanking pair itself qualifies; narrow
        // non-qualifying cones emit nothing.
        let wide = params.virtual_interval > 0.0 && width > params.virtual_interval;
        if !qualifying && !wide {
            continue;
        }
        let n_virtual = if wide {
            (width / params.virtual_interval).floor() as usize
        } else {
            0
        };
        let left_edge = lower.left_tangent.angle;
        let mut chain: Vec<InflatedAgent> = Vec::with_capacity(n_virtual + 2);
        chain.push(lower.clone());
        for j in 1..=n_virtual {
            let bearing = left_edge + width * j as f64 / (n_virtual + 1) as f64;
            chain.push(virtual_agent(bearing, params.d_max));
        }
        chain.push(upper.clone());
        for pair in chain.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let mut gap = Gap {
                key: GapKey::Pair(a.flank, b.flank),
                left: a.left_tangent,
                right: b.right_tangent,
                flanks: (a.flank, b.flank),
                status: GapStatus::Open,
                goal: Vec2::zeros(),
            };
            gap.goal = gap_goal(&gap, goal_rel, params.d_max);
            gaps.push(gap);
        }
    }
    gaps.sort_by(|a, b| a.key.cmp(&b.key));
    gaps
}
