use std::fmt;

use super::ModelError;
use crate::world::{Vertex, WorldGraph};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConflictKind {
    /// Two robots on the same vertex at the same step.
    Vertex,
    /// Two robots exchanging vertices across one step.
    Swap,
    Custom(String),
}

impl fmt::Display for ConflictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConflictKind::Vertex => f.write_str("vertex"),
            ConflictKind::Swap => f.write_str("swap"),
            ConflictKind::Custom(name) => f.write_str(name),
        }
    }
}

/// A violated restriction at one step of a joint trace.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConflictReport {
    pub step: usize,
    /// Robot indices, ascending; always at least two.
    pub robots: Vec<usize>,
    pub kind: ConflictKind,
}

/// A constraint on joint motion, evaluated one transition at a time.
///
/// `violations` returns every minimal robot set violating the restriction
/// when moving from `prev` to `next`; `prev` is `None` at the first step.
pub trait PlanRestriction: Send + Sync {
    fn kind(&self) -> ConflictKind;
    fn violations(&self, prev: Option<&[Vertex]>, next: &[Vertex]) -> Vec<Vec<usize>>;
}

/// No two robots share a vertex.
#[derive(Clone, Copy, Debug, Default)]
pub struct VertexCollision;

/// No two robots traverse the same edge in opposite directions.
#[derive(Clone, Copy, Debug, Default)]
pub struct SwapCollision;

impl PlanRestriction for VertexCollision {
    fn kind(&self) -> ConflictKind {
        ConflictKind::Vertex
    }

    fn violations(&self, _prev: Option<&[Vertex]>, next: &[Vertex]) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for i in 0..next.len() {
            for j in i + 1..next.len() {
                if next[i] == next[j] {
                    out.push(vec![i, j]);
                }
            }
        }
        out
    }
}

impl PlanRestriction for SwapCollision {
    fn kind(&self) -> ConflictKind {
        ConflictKind::Swap
    }

    fn violations(&self, prev: Option<&[Vertex]>, next: &[Vertex]) -> Vec<Vec<usize>> {
        let Some(prev) = prev else { return Vec::new() };
        let mut out = Vec::new();
        for i in 0..next.len() {
            if prev[i] == next[i] {
                continue;
            }
            for j in i + 1..next.len() {
                if next[i] == prev[j] && prev[i] == next[j] {
                    out.push(vec![i, j]);
                }
            }
        }
        out
    }
}

/// The two collision predicates: vertex and swap conflicts.
pub fn collision_restrictions() -> Vec<Box<dyn PlanRestriction>> {
    vec![Box::new(VertexCollision), Box::new(SwapCollision)]
}

/// Checks a synchronised joint trace (`trace[k][i]` = robot `i` at step `k`)
/// against `restrictions`, returning every violation at every step.
pub fn validate_trace(
    g: &WorldGraph,
    trace: &[Vec<Vertex>],
    restrictions: &[Box<dyn PlanRestriction>],
) -> Result<Vec<ConflictReport>, ModelError> {
    let Some(first) = trace.first() else {
        return Err(ModelError::MalformedTrace { step: 0, reason: "trace is empty".into() });
    };
    let width = first.len();
    for (k, row) in trace.iter().enumerate() {
        if row.len() != width {
            return Err(ModelError::MalformedTrace { step: k, reason: "row width differs".into() });
        }
        if let Some(v) = row.iter().find(|v| !g.is_free(**v)) {
            return Err(ModelError::MalformedTrace { step: k, reason: format!("{v} is not a free vertex") });
        }
        if k > 0 {
            if let Some(i) = (0..width).find(|&i| !g.can_step(trace[k - 1][i], row[i])) {
                return Err(ModelError::MalformedTrace {
                    step: k,
                    reason: format!("robot {i} jumps from {} to {}", trace[k - 1][i], row[i]),
                });
            }
        }
    }
    let mut reports = Vec::new();
    for (k, row) in trace.iter().enumerate() {
        let prev = (k > 0).then(|| trace[k - 1].as_slice());
        for r in restrictions {
            for robots in r.violations(prev, row) {
                reports.push(ConflictReport { step: k, robots, kind: r.kind() });
            }
        }
    }
    Ok(reports)
}

/// Minimal robot sets that conflict within `h` steps when each follows its
/// plan and ignores every robot outside the set.
///
/// `plans[i][t]` is robot `i`'s position `t` steps from now; robots past the
/// end of their plan stay at its last vertex. Enumerates subsets exhaustively,
/// so it is intended for small teams.
pub fn minimal_conflict_relations(
    plans: &[Vec<Vertex>],
    h: usize,
    restrictions: &[Box<dyn PlanRestriction>],
) -> Vec<Vec<usize>> {
    let n = plans.len();
    assert!(n < 32, "subset enumeration is limited to fewer than 32 robots");
    let at = |i: usize, t: usize| plans[i][t.min(plans[i].len() - 1)];
    let conflicts = |members: &[usize]| -> bool {
        for t in 1..=h {
            let prev: Vec<Vertex> = members.iter().map(|&i| at(i, t - 1)).collect();
            let next: Vec<Vertex> = members.iter().map(|&i| at(i, t)).collect();
            if restrictions.iter().any(|r| !r.violations(Some(&prev), &next).is_empty()) {
                return true;
            }
        }
        false
    };
    let mut masks: Vec<u32> = (1..(1u32 << n)).filter(|m| m.count_ones() >= 2).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    let mut minimal: Vec<u32> = Vec::new();
    for m in masks {
        if minimal.iter().any(|&s| s & m == s) {
            continue;
        }
        let members: Vec<usize> = (0..n).filter(|i| m & (1 << i) != 0).collect();
        if conflicts(&members) {
            minimal.push(m);
        }
    }
    let mut out: Vec<Vec<usize>> =
        minimal.into_iter().map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect()).collect();
    out.sort();
    out
}
