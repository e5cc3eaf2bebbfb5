//! Optimistic conflict resolution: short joint replans that must leave the
//! participants jointly closer to their goals, plus contribution values.

use std::collections::HashSet;

use thiserror::Error;

use crate::coordination::{at, Closure, SensingConfig};
use crate::world::{GoalDistances, Vertex, WorldGraph};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConvergenceError {
    #[error("robot {robot} has no active local plan")]
    NoActiveLocalPlan { robot: usize },
    #[error("robot {robot}: delta {delta} outside 0..={len}")]
    DeltaOutOfRange { robot: usize, delta: usize, len: usize },
}

/// A robot's progress through its current local plan.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LocalGoal {
    pub vertex: Vertex,
    /// |Q|: number of actions in the local plan.
    pub len: usize,
    /// Actions executed so far.
    pub executed: usize,
}

impl LocalGoal {
    pub fn remaining(&self) -> usize {
        self.len - self.executed
    }
}

/// Contribution values and local goals for every robot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContributionLedger {
    gamma: Vec<i64>,
    gamma_pre: Vec<i64>,
    local: Vec<Option<LocalGoal>>,
}

impl ContributionLedger {
    pub fn new(robots: usize) -> Self {
        Self { gamma: vec![0; robots], gamma_pre: vec![0; robots], local: vec![None; robots] }
    }

    pub fn gamma(&self, robot: usize) -> i64 {
        self.gamma[robot]
    }

    pub fn gamma_pre(&self, robot: usize) -> i64 {
        self.gamma_pre[robot]
    }

    pub fn local_goal(&self, robot: usize) -> Option<LocalGoal> {
        self.local[robot]
    }

    pub fn set_gamma(&mut self, robot: usize, value: i64) {
        self.gamma[robot] = value;
    }

    /// Records the live value as the pre-conflict value.
    pub fn snapshot(&mut self, robot: usize) -> i64 {
        self.gamma_pre[robot] = self.gamma[robot];
        self.gamma[robot]
    }

    /// Starts tracking a local plan of `len` actions ending at `vertex`.
    pub fn begin_local(&mut self, robot: usize, vertex: Vertex, len: usize) {
        self.local[robot] = Some(LocalGoal { vertex, len, executed: 0 });
    }

    /// Marks one action of the robot's local plan as executed and returns
    /// the new delta.
    pub fn advance_local(&mut self, robot: usize) -> Result<usize, ConvergenceError> {
        let lg = self.local[robot].as_mut().ok_or(ConvergenceError::NoActiveLocalPlan { robot })?;
        lg.executed = (lg.executed + 1).min(lg.len);
        Ok(lg.executed)
    }

    /// Drops the local plan and zeroes the contribution value.
    pub fn reset(&mut self, robot: usize) {
        self.local[robot] = None;
        self.gamma[robot] = 0;
    }

    /// Drops the local plan, keeping the contribution value.
    pub fn end_local(&mut self, robot: usize) {
        self.local[robot] = None;
    }
}

/// Contribution update while executing a local plan:
/// `gamma = C(local_goal) - C(now)`. At `delta = |Q|` the local plan ends.
pub fn update_contribution(
    ledger: &mut ContributionLedger,
    robot: usize,
    delta: usize,
    position_now: Vertex,
    costs: &GoalDistances,
) -> Result<i64, ConvergenceError> {
    let lg = ledger.local[robot].ok_or(ConvergenceError::NoActiveLocalPlan { robot })?;
    if delta > lg.len {
        return Err(ConvergenceError::DeltaOutOfRange { robot, delta, len: lg.len });
    }
    let value = costs.cost(robot, lg.vertex) as i64 - costs.cost(robot, position_now) as i64;
    ledger.gamma[robot] = value;
    if delta == lg.len {
        ledger.local[robot] = None;
    }
    Ok(value)
}

/// Left and right side of the progress inequality, checked at construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProgressCertificate {
    /// Sum of current costs plus pre-conflict contribution values.
    pub lhs: i64,
    /// Sum of costs at the local goals.
    pub rhs: i64,
}

impl ProgressCertificate {
    pub fn holds(&self) -> bool {
        self.lhs > self.rhs
    }
}

/// A bounded joint replan for a set of participants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointLocalPlan {
    pub participants: Vec<usize>,
    /// `moves[p][t]`: participant `p` after `t + 1` steps. All equal length.
    pub moves: Vec<Vec<Vertex>>,
    pub certificate: ProgressCertificate,
}

impl JointLocalPlan {
    pub fn len(&self) -> usize {
        self.moves.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn local_goal(&self, p: usize) -> Vertex {
        *self.moves[p].last().unwrap()
    }
}

/// Inputs for [`converge`].
pub struct ConvergeRequest<'a> {
    pub g: &'a WorldGraph,
    pub costs: &'a GoalDistances,
    /// The inner closure to resolve.
    pub ic: &'a [usize],
    pub oc: &'a Closure,
    /// Predicted trajectories (t = 0 is now) for every robot, indexed by
    /// robot; at least `beta + 1` entries for members of the closure.
    pub trajectories: &'a [Vec<Vertex>],
    pub ledger: &'a ContributionLedger,
    pub cfg: SensingConfig,
    /// Members of the closure that may be replanned.
    pub eligible: &'a dyn Fn(usize) -> bool,
    /// Cell of the earliest predicted conflict; expansion order key.
    pub conflict_cell: Vertex,
    pub max_participants: usize,
    pub node_budget: usize,
}

pub const DEFAULT_MAX_PARTICIPANTS: usize = 6;
pub const DEFAULT_NODE_BUDGET: usize = 100_000;

/// Searches for a joint local plan of fewer than `beta` steps, starting from
/// the inner closure and growing the participant set towards the closure.
///
/// Non-participants are fixed to their predicted trajectories. A plan is
/// accepted when the participants' summed goal distance at the local goals
/// is strictly below their summed current distance plus contribution values,
/// and neither the plan nor the shortest paths resumed from the local goals
/// conflict with anyone within the horizon. The shallowest plan wins, then
/// the smallest summed distance.
pub fn converge(req: &ConvergeRequest<'_>) -> Option<JointLocalPlan> {
    let mut participants: Vec<usize> = req.ic.iter().copied().filter(|&i| (req.eligible)(i)).collect();
    if participants.is_empty() {
        return None;
    }
    let mut extra: Vec<usize> = req
        .oc
        .oc
        .iter()
        .copied()
        .filter(|i| !participants.contains(i) && (req.eligible)(*i))
        .collect();
    extra.sort_by_key(|&i| (req.g.chebyshev(req.trajectories[i][0], req.conflict_cell), i));
    let mut extra = extra.into_iter();
    loop {
        participants.sort_unstable();
        match search(req, &participants) {
            Outcome::Found(plan) => return Some(plan),
            Outcome::OverBudget => return None,
            Outcome::None => {}
        }
        if participants.len() >= req.max_participants {
            return None;
        }
        participants.push(extra.next()?);
    }
}

enum Outcome {
    Found(JointLocalPlan),
    None,
    OverBudget,
}

fn search(req: &ConvergeRequest<'_>, participants: &[usize]) -> Outcome {
    let g = req.g;
    let beta = req.cfg.beta as usize;
    if beta < 2 {
        return Outcome::None;
    }
    let m = participants.len();
    let others: Vec<usize> = req.oc.oc.iter().copied().filter(|i| !participants.contains(i)).collect();
    let start: Vec<Vertex> = participants.iter().map(|&i| req.trajectories[i][0]).collect();
    let lhs: i64 = participants
        .iter()
        .zip(&start)
        .map(|(&i, &v)| req.costs.cost(i, v) as i64 + req.ledger.gamma(i))
        .sum();

    // layer[t] holds (state, parent index in layer t-1)
    let mut layers: Vec<Vec<(Vec<Vertex>, usize)>> = vec![vec![(start, usize::MAX)]];
    let mut nodes = 1usize;
    for t in 1..beta {
        let last = t + 1 == beta;
        let prev = &layers[t - 1];
        let mut x = Expander {
            g,
            fixed_before: others.iter().map(|&o| at(&req.trajectories[o], t - 1)).collect(),
            fixed_now: others.iter().map(|&o| at(&req.trajectories[o], t)).collect(),
            here: Vec::new(),
            rows: Vec::new(),
            lower: Vec::new(),
            limit: lhs,
            // a robot gets at most one cell closer per step, so states that
            // cannot drop below `lhs` by the last layer are useless
            slack: (beta - 1 - t) as i64,
            next: Vec::with_capacity(m),
            partial: 0,
            leaves: Vec::new(),
        };
        let mut seen: HashSet<Vec<Vertex>> = HashSet::new();
        let mut layer = Vec::new();
        let mut best: Option<(i64, Vec<Vertex>, usize)> = None;
        for (idx, (state, _)) in prev.iter().enumerate() {
            x.load(state, participants, req.costs);
            x.leaves.clear();
            x.run(0);
            for (rhs, s) in x.leaves.drain(..) {
                if last {
                    // the last layer is only scanned for the best state, never stored
                    nodes += 1;
                    if nodes > req.node_budget {
                        return Outcome::OverBudget;
                    }
                    if best.as_ref().is_none_or(|b| rhs < b.0) && resumed_is_clear(req, participants, &others, &s, t) {
                        x.limit = rhs;
                        best = Some((rhs, s, idx));
                    }
                } else if seen.insert(s.clone()) {
                    if rhs < lhs && best.as_ref().is_none_or(|b| rhs < b.0) && resumed_is_clear(req, participants, &others, &s, t) {
                        best = Some((rhs, s.clone(), idx));
                    }
                    layer.push((s, idx));
                    nodes += 1;
                    if nodes > req.node_budget {
                        return Outcome::OverBudget;
                    }
                }
            }
        }
        if let Some((rhs, state, mut idx)) = best {
            let mut moves = vec![Vec::with_capacity(t); m];
            for p in 0..m {
                moves[p].push(state[p]);
            }
            for k in (1..t).rev() {
                let (state, parent) = &layers[k][idx];
                for p in 0..m {
                    moves[p].push(state[p]);
                }
                idx = *parent;
            }
            for mv in &mut moves {
                mv.reverse();
            }
            let certificate = ProgressCertificate { lhs, rhs };
            debug_assert!(certificate.holds());
            return Outcome::Found(JointLocalPlan { participants: participants.to_vec(), moves, certificate });
        }
        layers.push(layer);
    }
    Outcome::None
}

/// Enumerates joint successors of one state that avoid vertex and swap
/// conflicts among participants and against the fixed robots, skipping
/// branches whose summed goal distance minus `slack` per participant cannot
/// get below `limit`.
struct Expander<'a> {
    g: &'a WorldGraph,
    fixed_before: Vec<Vertex>,
    fixed_now: Vec<Vertex>,
    here: Vec<Vertex>,
    /// `rows[p][k]`: goal distance of participant `p` after its `k`-th
    /// option (0 = stay, then neighbours in order).
    rows: Vec<Vec<i64>>,
    /// `lower[p]`: least summed distance participants `p..` can reach.
    lower: Vec<i64>,
    limit: i64,
    slack: i64,
    next: Vec<Vertex>,
    partial: i64,
    leaves: Vec<(i64, Vec<Vertex>)>,
}

impl Expander<'_> {
    fn load(&mut self, state: &[Vertex], participants: &[usize], costs: &GoalDistances) {
        self.here.clear();
        self.here.extend_from_slice(state);
        self.rows = participants
            .iter()
            .zip(state)
            .map(|(&i, &v)| std::iter::once(&v).chain(self.g.neighbors(v)).map(|&w| costs.cost(i, w) as i64).collect())
            .collect();
        let m = state.len();
        self.lower = vec![0; m + 1];
        for p in (0..m).rev() {
            self.lower[p] = self.lower[p + 1] + self.rows[p].iter().min().unwrap();
        }
        self.next.clear();
        self.partial = 0;
    }

    fn run(&mut self, p: usize) {
        if p == self.here.len() {
            self.leaves.push((self.partial, self.next.clone()));
            return;
        }
        let here = self.here[p];
        let g = self.g;
        let reach = self.here.len() as i64 * self.slack;
        for (k, &cand) in std::iter::once(&here).chain(g.neighbors(here)).enumerate() {
            let cost = self.rows[p][k];
            if self.partial + cost + self.lower[p + 1] - reach >= self.limit {
                continue;
            }
            if self.next.contains(&cand) || self.fixed_now.contains(&cand) {
                continue;
            }
            if cand != here {
                let swaps_participant = (0..p).any(|q| self.here[q] == cand && self.next[q] == here);
                let swaps_fixed = self.fixed_before.iter().zip(&self.fixed_now).any(|(&b, &n)| b == cand && n == here);
                if swaps_participant || swaps_fixed {
                    continue;
                }
            }
            self.next.push(cand);
            self.partial += cost;
            self.run(p + 1);
            self.partial -= cost;
            self.next.pop();
        }
    }
}

/// After the local plan ends at step `t`, participants follow their shortest
/// paths; no conflict may arise up to the horizon.
fn resumed_is_clear(req: &ConvergeRequest<'_>, participants: &[usize], others: &[usize], state: &[Vertex], t: usize) -> bool {
    let beta = req.cfg.beta as usize;
    let mut cur: Vec<Vertex> = state.to_vec();
    for step in t + 1..=beta {
        let nxt: Vec<Vertex> = participants
            .iter()
            .zip(&cur)
            .map(|(&i, &v)| req.costs.next_step(req.g, i, v).unwrap_or(v))
            .collect();
        for a in 0..nxt.len() {
            for b in a + 1..nxt.len() {
                if nxt[a] == nxt[b] || (cur[a] != nxt[a] && nxt[a] == cur[b] && nxt[b] == cur[a]) {
                    return false;
                }
            }
            for &o in others {
                let (ob, on) = (at(&req.trajectories[o], step - 1), at(&req.trajectories[o], step));
                if nxt[a] == on || (cur[a] != nxt[a] && nxt[a] == ob && on == cur[a]) {
                    return false;
                }
            }
        }
        cur = nxt;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordination::{compute_ocs, project};

    #[test]
    fn gamma_examples() {
        let g = WorldGraph::build_grid(10, 1, &[]).unwrap();
        let costs = GoalDistances::new(&g, &[Vertex(9)]);
        let mut ledger = ContributionLedger::new(1);
        // local goal 3 from goal, now 5 from goal
        ledger.begin_local(0, Vertex(6), 4);
        assert_eq!(update_contribution(&mut ledger, 0, 1, Vertex(4), &costs).unwrap(), -2);
        ledger.begin_local(0, Vertex(5), 4);
        assert_eq!(update_contribution(&mut ledger, 0, 1, Vertex(7), &costs).unwrap(), 2);
        assert_eq!(update_contribution(&mut ledger, 0, 4, Vertex(5), &costs).unwrap(), 0);
        assert!(ledger.local_goal(0).is_none());
        assert!(matches!(
            update_contribution(&mut ledger, 0, 0, Vertex(5), &costs),
            Err(ConvergenceError::NoActiveLocalPlan { robot: 0 })
        ));
    }

    #[test]
    fn closed_corridor_has_no_local_plan() {
        let g = WorldGraph::build_grid(3, 1, &[]).unwrap();
        let costs = GoalDistances::new(&g, &[Vertex(2), Vertex(0)]);
        let cfg = SensingConfig::new(3, 3).unwrap();
        let pos = [Vertex(0), Vertex(2)];
        let trajectories = vec![project(pos[0], costs.route(&g, 0, pos[0]), 3), project(pos[1], costs.route(&g, 1, pos[1]), 3)];
        let oc = compute_ocs(&pos, &g, &cfg).remove(0);
        let ledger = ContributionLedger::new(2);
        let req = ConvergeRequest {
            g: &g,
            costs: &costs,
            ic: &[0, 1],
            oc: &oc,
            trajectories: &trajectories,
            ledger: &ledger,
            cfg,
            eligible: &|_| true,
            conflict_cell: Vertex(1),
            max_participants: DEFAULT_MAX_PARTICIPANTS,
            node_budget: DEFAULT_NODE_BUDGET,
        };
        assert!(converge(&req).is_none());
    }
}
