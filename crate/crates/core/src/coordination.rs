//! Sensing windows, outer/inner closures and windowed conflict prediction.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::world::{Vertex, WorldGraph};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoordinationError {
    #[error("sensing range must be at least 1")]
    ZeroRange,
    #[error("prediction horizon beta must be at least 1")]
    ZeroBeta,
}

/// Sensing radius (Chebyshev, in cells) and conflict prediction horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SensingConfig {
    pub sensing_range: u32,
    pub beta: u32,
}

impl SensingConfig {
    pub fn new(sensing_range: u32, beta: u32) -> Result<Self, CoordinationError> {
        if sensing_range == 0 {
            return Err(CoordinationError::ZeroRange);
        }
        if beta == 0 {
            return Err(CoordinationError::ZeroBeta);
        }
        Ok(Self { sensing_range, beta })
    }

    /// Horizon defaults to the sensing range.
    pub fn with_range(sensing_range: u32) -> Result<Self, CoordinationError> {
        Self::new(sensing_range, sensing_range)
    }

    pub fn senses(&self, g: &WorldGraph, a: Vertex, b: Vertex) -> bool {
        g.chebyshev(a, b) <= self.sensing_range
    }
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self { sensing_range: 2, beta: 2 }
    }
}

/// Robots sharing a predicted conflict, with the earliest step (relative to
/// the sensing step) at which one of their conflicts occurs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InnerClosure {
    pub robots: Vec<usize>,
    pub first_step: usize,
    /// A cell involved in the earliest conflict.
    pub location: Vertex,
}

/// An outer closure: robots linked by sensing, directly or through relays.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Closure {
    pub oc: Vec<usize>,
    pub ics: Vec<InnerClosure>,
    pub detector: Option<usize>,
}

impl Closure {
    pub fn new(mut oc: Vec<usize>) -> Self {
        oc.sort_unstable();
        oc.dedup();
        Self { oc, ics: Vec::new(), detector: None }
    }

    pub fn contains(&self, robot: usize) -> bool {
        self.oc.binary_search(&robot).is_ok()
    }

    /// Union of all inner closures.
    pub fn psi(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.ics.iter().flat_map(|ic| ic.robots.iter().copied()).collect();
        set.into_iter().collect()
    }
}

/// Free cells within the Chebyshev window around `pos`, in id order.
pub fn sense_window(g: &WorldGraph, pos: Vertex, cfg: &SensingConfig) -> Vec<Vertex> {
    let (x, y) = g.coords(pos);
    let r = cfg.sensing_range;
    let mut out = Vec::new();
    for yy in y.saturating_sub(r)..=(y + r).min(g.height() - 1) {
        for xx in x.saturating_sub(r)..=(x + r).min(g.width() - 1) {
            if let Some(v) = g.cell(xx, yy).filter(|v| g.is_free(*v)) {
                out.push(v);
            }
        }
    }
    out
}

/// Partition of robots into connected components of the mutual-sensing
/// graph. Closures are ordered by their smallest member.
pub fn compute_ocs(positions: &[Vertex], g: &WorldGraph, cfg: &SensingConfig) -> Vec<Closure> {
    components(positions.len(), |a, b| cfg.senses(g, positions[a], positions[b]))
        .into_iter()
        .map(Closure::new)
        .collect()
}

/// Connected components of `0..n` under the symmetric relation `linked`,
/// each sorted, ordered by smallest member.
pub fn components(n: usize, linked: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let mut label = vec![usize::MAX; n];
    let mut out = Vec::new();
    for root in 0..n {
        if label[root] != usize::MAX {
            continue;
        }
        let id = out.len();
        label[root] = id;
        let mut members = vec![root];
        let mut stack = vec![root];
        while let Some(a) = stack.pop() {
            for b in 0..n {
                if label[b] == usize::MAX && linked(a, b) {
                    label[b] = id;
                    members.push(b);
                    stack.push(b);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Position `t` steps ahead on a trajectory that stays at its last vertex.
pub fn at(traj: &[Vertex], t: usize) -> Vertex {
    traj[t.min(traj.len() - 1)]
}

/// Current position followed by the next `horizon` planned positions; a
/// robot past the end of its plan stays where it is.
pub fn project(pos: Vertex, plan: impl IntoIterator<Item = Vertex>, horizon: usize) -> Vec<Vertex> {
    let mut traj = Vec::with_capacity(horizon + 1);
    traj.push(pos);
    traj.extend(plan.into_iter().take(horizon));
    while traj.len() < horizon + 1 {
        traj.push(*traj.last().unwrap());
    }
    traj
}

/// First vertex or swap conflict between two trajectories within steps
/// `1..=horizon`, as (step, cell).
pub fn pair_conflict(a: &[Vertex], b: &[Vertex], horizon: usize) -> Option<(usize, Vertex)> {
    for t in 1..=horizon {
        let (a0, a1, b0, b1) = (at(a, t - 1), at(a, t), at(b, t - 1), at(b, t));
        if a1 == b1 {
            return Some((t, a1));
        }
        if a0 != a1 && a1 == b0 && a0 == b1 {
            return Some((t, a1));
        }
    }
    None
}

/// Predicted conflicts among the members of `oc` within `beta` steps.
///
/// `trajectories[i][t]` is robot `i`'s predicted position `t` steps from
/// now (t = 0 is the current position). Returns the closure with its inner
/// closures filled in; pairs sharing a robot are merged into one IC.
pub fn sense_conflict(trajectories: &[Vec<Vertex>], oc: &Closure, cfg: &SensingConfig) -> Closure {
    sense_conflict_filtered(trajectories, oc, cfg, |_, _| false)
}

/// As [`sense_conflict`], skipping pairs for which `ignore(i, j)` holds.
pub fn sense_conflict_filtered(
    trajectories: &[Vec<Vertex>],
    oc: &Closure,
    cfg: &SensingConfig,
    ignore: impl Fn(usize, usize) -> bool,
) -> Closure {
    let h = cfg.beta as usize;
    let mut pairs: Vec<(usize, usize, usize, Vertex)> = Vec::new();
    for (x, &i) in oc.oc.iter().enumerate() {
        for &j in &oc.oc[x + 1..] {
            if ignore(i, j) {
                continue;
            }
            if let Some((t, v)) = pair_conflict(&trajectories[i], &trajectories[j], h) {
                pairs.push((i, j, t, v));
            }
        }
    }
    let linked = |a: usize, b: usize| {
        pairs.iter().any(|&(i, j, _, _)| (i == a || j == a) && (i == b || j == b) && a != b)
    };
    let involved: Vec<usize> = {
        let set: BTreeSet<usize> = pairs.iter().flat_map(|&(i, j, _, _)| [i, j]).collect();
        set.into_iter().collect()
    };
    let mut ics: Vec<InnerClosure> = components(involved.len(), |a, b| linked(involved[a], involved[b]))
        .into_iter()
        .map(|idx| {
            let robots: Vec<usize> = idx.into_iter().map(|k| involved[k]).collect();
            let (first_step, location) = pairs
                .iter()
                .filter(|p| robots.contains(&p.0))
                .map(|p| (p.2, p.3))
                .min()
                .unwrap();
            InnerClosure { robots, first_step, location }
        })
        .collect();
    ics.sort_by_key(|ic| (ic.first_step, ic.robots[0]));
    Closure { oc: oc.oc.clone(), ics, detector: oc.detector }
}
