//! Static SVG rendering of episode traces: world box, goal square, agent
//! discs, and the robot path. The failure-mode style draws time-faded agent
//! positions, darkest at their initial positions.

use crate::pipeline::RunTrace;
use crate::Vec2;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy)]
pub struct PlotStyle {
    /// Draw agents at several time slices with age-based fading instead of
    /// final positions only.
    pub time_fade: bool,
    /// Goal square half-width.
    pub goal_half_width: f64,
    pub agent_radius: f64,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self {
            time_fade: false,
            goal_half_width: 0.05,
            agent_radius: 0.05,
        }
    }
}

fn circle(svg: &mut String, p: Vec2, r: f64, fill: &str, opacity: f64) {
    writeln!(
        svg,
        r#"<circle cx="{}" cy="{}" r="{}" fill="{}" fill-opacity="{}"/>"#,
        p.x, -p.y, r, fill, opacity
    )
    .unwrap();
}

/// Render a recorded trace. Byte-stable for identical input.
pub fn emit_plot(trace: &RunTrace, goal: Vec2, style: &PlotStyle) -> String {
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="-1.08 -1.08 2.16 2.16" width="540" height="540">"#
    )
    .unwrap();
    let (bmin, bmax) = match trace.first() {
        Some(ws) => (ws.bounds.min, ws.bounds.max),
        None => (Vec2::new(-1.0, -1.0), Vec2::new(1.0, 1.0)),
    };
    writeln!(
        svg,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="white" stroke="black" stroke-width="0.006"/>"#,
        bmin.x,
        -bmax.y,
        bmax.x - bmin.x,
        bmax.y - bmin.y
    )
    .unwrap();
    // Goal square.
    let g = style.goal_half_width;
    writeln!(
        svg,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="green" fill-opacity="0.8"/>"#,
        goal.x - g,
        -(goal.y + g),
        2.0 * g,
        2.0 * g
    )
    .unwrap();

    if let Some(first) = trace.first() {
        if style.time_fade && trace.len() > 1 {
            // Up to eight slices, darker hue at the initial positions.
            let slices = 8.min(trace.len());
            for s in 0..slices {
                let idx = s * (trace.len() - 1) / (slices - 1).max(1);
                let age = s as f64 / (slices - 1).max(1) as f64;
                let opacity = 0.85 - 0.6 * age;
                for agent in &trace[idx].agents {
                    circle(&mut svg, agent.position, style.agent_radius, "#555555", opacity);
                }
            }
        } else {
            let last = trace.last().unwrap_or(first);
            for agent in &last.agents {
                circle(&mut svg, agent.position, style.agent_radius, "#777777", 0.8);
            }
        }
    }

    // Robot path.
    if !trace.is_empty() {
        let mut points = String::new();
        for ws in trace {
            write!(points, "{},{} ", ws.robot.position.x, -ws.robot.position.y).unwrap();
        }
        writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="red" stroke-width="0.008"/>"#,
            points.trim_end()
        )
        .unwrap();
        let start = trace.first().unwrap().robot.position;
        circle(&mut svg, start, 0.015, "blue", 1.0);
        // Path end marker; doubles as the collision marker when the trace
        // stops at a collision.
        let end = trace.last().unwrap().robot.position;
        writeln!(
            svg,
            r#"<path d="M {} {} l 0.02 0.02 m -0.02 0 l 0.02 -0.02" stroke="red" stroke-width="0.008" fill="none" transform="translate(-0.01,-0.01)"/>"#,
            end.x, -end.y
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Params;
    use crate::pipeline::{run_episode, Mode, Protocol};

    #[test]
    fn empty_world_plot_is_single_near_straight_polyline() {
        let mut p = Params::default();
        p.scenario.n_agents = 0;
        let (_, trace) = run_episode(&p, Mode::Full, Protocol::StopOnCollision, true);
        let svg = emit_plot(&trace.unwrap(), p.scenario.goal_v(), &PlotStyle::default());
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("fill=\"green\""));
    }

    #[test]
    fn plot_bytes_stable_for_fixed_trace() {
        let mut p = Params::default();
        p.scenario.n_agents = 5;
        p.scenario.rng_seed = 3;
        let (_, trace) = run_episode(&p, Mode::Full, Protocol::StopOnCollision, true);
        let trace = trace.unwrap();
        let a = emit_plot(&trace, p.scenario.goal_v(), &PlotStyle::default());
        let b = emit_plot(&trace, p.scenario.goal_v(), &PlotStyle::default());
        assert_eq!(a, b);
        let faded = emit_plot(
            &trace,
            p.scenario.goal_v(),
            &PlotStyle {
                time_fade: true,
                ..PlotStyle::default()
            },
        );
        assert!(faded.len() > a.len());
    }
}
