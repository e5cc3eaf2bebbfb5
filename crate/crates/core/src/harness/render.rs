use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::executor::Trace;
use crate::world::{Scenario, Vertex};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RenderError {
    #[error("trace has {trace} robots but the scenario has {scenario}")]
    RobotCount { trace: usize, scenario: usize },
    #[error("trace does not belong to this scenario")]
    Mismatch,
}

fn check(trace: &Trace, scenario: &Scenario) -> Result<(), RenderError> {
    if trace.robot_count() != scenario.robot_count() {
        return Err(RenderError::RobotCount { trace: trace.robot_count(), scenario: scenario.robot_count() });
    }
    if !trace.matches(scenario) {
        return Err(RenderError::Mismatch);
    }
    Ok(())
}

/// Position of every robot at local step `k`, holding the last position of
/// robots that took fewer steps.
fn positions_at(paths: &[Vec<Vertex>], k: usize) -> Vec<Vertex> {
    paths.iter().map(|p| p[k.min(p.len() - 1)]).collect()
}

/// Text frames, one per step from 0 to the trace's step count. Obstacles
/// are `#`, goals `+`, robots their ids; each frame lists the closures that
/// executed the step.
pub fn render_frames(trace: &Trace, scenario: &Scenario) -> Result<Vec<String>, RenderError> {
    check(trace, scenario)?;
    let g = scenario.graph();
    let paths: Vec<Vec<Vertex>> = (0..trace.robot_count()).map(|r| trace.positions_of(r)).collect();
    let width = trace.robot_ids.iter().map(|id| id.to_string().len()).max().unwrap_or(1) + 1;
    let goals: HashMap<Vertex, ()> = scenario.goals().into_iter().map(|v| (v, ())).collect();
    let ticks = trace.steps() as usize;
    let mut frames = Vec::with_capacity(ticks + 1);
    for k in 0..=ticks {
        let here: HashMap<Vertex, u32> =
            positions_at(&paths, k).into_iter().enumerate().map(|(r, v)| (v, trace.robot_ids[r])).collect();
        let mut out = format!("step {k}\n");
        for y in 0..g.height() {
            for x in 0..g.width() {
                let v = g.cell(x, y).unwrap();
                let glyph = if g.is_obstacle(v) {
                    "#".repeat(width - 1)
                } else if let Some(id) = here.get(&v) {
                    id.to_string()
                } else if goals.contains_key(&v) {
                    "+".to_string()
                } else {
                    ".".to_string()
                };
                write!(out, "{glyph:>width$}").unwrap();
            }
            out.push('\n');
        }
        let mut ocs: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for row in trace.rows.iter().filter(|r| r.step == k as u64 && k > 0) {
            ocs.entry(row.oc_id).or_default().push(trace.robot_ids[row.robot]);
        }
        for (oc, members) in ocs.iter().filter(|(_, m)| m.len() > 1) {
            let list: Vec<String> = members.iter().map(|m| m.to_string()).collect();
            writeln!(out, "oc {oc}: {}", list.join(",")).unwrap();
        }
        frames.push(out);
    }
    Ok(frames)
}

/// Vector overview: obstacles, goals and each robot's trajectory.
pub fn render_svg(trace: &Trace, scenario: &Scenario) -> Result<String, RenderError> {
    check(trace, scenario)?;
    let g = scenario.graph();
    const CELL: u32 = 20;
    let (w, h) = (g.width() * CELL, g.height() * CELL);
    let mut out = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n");
    writeln!(out, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\" stroke=\"black\"/>").unwrap();
    for v in g.obstacles() {
        let (x, y) = g.coords(v);
        writeln!(out, "<rect x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"#333\"/>", x * CELL, y * CELL).unwrap();
    }
    let n = trace.robot_count().max(1);
    let center = |v: Vertex| {
        let (x, y) = g.coords(v);
        (x * CELL + CELL / 2, y * CELL + CELL / 2)
    };
    for r in 0..trace.robot_count() {
        let hue = r * 360 / n;
        let colour = format!("hsl({hue},70%,45%)");
        let points: Vec<String> = trace
            .positions_of(r)
            .into_iter()
            .map(|v| {
                let (x, y) = center(v);
                format!("{x},{y}")
            })
            .collect();
        writeln!(out, "<polyline points=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\"/>", points.join(" ")).unwrap();
        let (gx, gy) = center(scenario.goals()[r]);
        writeln!(out, "<rect x=\"{}\" y=\"{}\" width=\"8\" height=\"8\" fill=\"{colour}\"/>", gx - 4, gy - 4).unwrap();
        let (sx, sy) = center(scenario.starts()[r]);
        writeln!(
            out,
            "<text x=\"{sx}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\" fill=\"{colour}\">{}</text>",
            sy + 4,
            trace.robot_ids[r]
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    Ok(out)
}
