//! Coupling groups: priority ordering, leader-driven push-and-pull motion,
//! merging, and the group decoupling test.

mod regions;
mod search;
mod step;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::convergence::ContributionLedger;
use crate::coordination::SensingConfig;
use crate::world::{GoalDistances, Vertex, WorldGraph};

pub use regions::{bridges, Regions};
pub use step::{Operator, StepDecision, StepView};

pub type GroupId = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PushPullError {
    #[error("group {group} has an empty coupling snapshot")]
    EmptySnapshot { group: GroupId },
    #[error("group {group} cannot bring its members to their goals")]
    InfeasibleGroup { group: GroupId },
}

/// Search limits for the group step generator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PushPullLimits {
    /// Exact joint search over the whole group is used when
    /// `free_cells ^ participants` stays within this bound.
    pub exact_state_budget: u64,
    /// Node budget of each local exchange search.
    pub exchange_budget: usize,
    /// Window radii tried by the exchange search, in order.
    pub exchange_windows: Vec<u32>,
    /// Robots taking part in one exchange, leader included.
    pub exchange_participants: usize,
}

impl Default for PushPullLimits {
    fn default() -> Self {
        Self {
            exact_state_budget: 5_000,
            exchange_budget: 200_000,
            exchange_windows: vec![2, 3, 4, 6],
            exchange_participants: 4,
        }
    }
}

/// Shared, immutable inputs of every push-and-pull call.
pub struct PushPullContext<'a> {
    pub g: &'a WorldGraph,
    pub costs: &'a GoalDistances,
    pub regions: &'a Regions,
    pub cfg: SensingConfig,
    pub limits: PushPullLimits,
}

impl PushPullContext<'_> {
    pub fn at_goal(&self, robot: usize, v: Vertex) -> bool {
        self.costs.goal(robot) == v
    }
}

/// Position and pre-coupling contribution value of one member.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SnapshotEntry {
    pub position: Vertex,
    pub gamma_pre: i64,
}

impl SnapshotEntry {
    pub fn baseline(&self, costs: &GoalDistances, robot: usize) -> i64 {
        costs.cost(robot, self.position) as i64 + self.gamma_pre
    }
}

/// Members grouped by the region holding their goal (`f` maps members to
/// regions, `D` lists each region's members).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SubproblemAssignment {
    pub region_of: BTreeMap<usize, u32>,
    pub members_of: BTreeMap<u32, Vec<usize>>,
}

impl SubproblemAssignment {
    pub fn subproblem_count(&self) -> usize {
        self.members_of.len()
    }
}

pub fn assign_subproblems(regions: &Regions, members: &[usize], costs: &GoalDistances) -> SubproblemAssignment {
    let mut out = SubproblemAssignment::default();
    for &i in members {
        let r = regions.region(costs.goal(i));
        out.region_of.insert(i, r);
        out.members_of.entry(r).or_default().push(i);
    }
    for list in out.members_of.values_mut() {
        list.sort_unstable();
    }
    out
}

/// Order in which members not at their goal become leader.
///
/// A member whose goal sits on a corridor cell crossed by other members'
/// routes is deferred by the number of such members; ties go to the member
/// nearer its goal, then the lower index.
pub fn compute_priority(
    ctx: &PushPullContext<'_>,
    members: &[usize],
    assignment: &SubproblemAssignment,
    positions: &[Vertex],
) -> Vec<usize> {
    let active: Vec<usize> = members.iter().copied().filter(|&i| !ctx.at_goal(i, positions[i])).collect();
    let routes: BTreeMap<usize, BTreeSet<Vertex>> = active
        .iter()
        .map(|&i| (i, ctx.costs.route(ctx.g, i, positions[i]).into_iter().collect()))
        .collect();
    let mut keyed: Vec<(usize, u32, usize)> = active
        .iter()
        .map(|&i| {
            let goal = ctx.costs.goal(i);
            let region = assignment.region_of.get(&i).copied().unwrap_or_else(|| ctx.regions.region(goal));
            let blocking = if ctx.regions.region_size(region) == 1 {
                active.iter().filter(|&&j| j != i && routes[&j].contains(&goal)).count()
            } else {
                0
            };
            (blocking, ctx.costs.cost(i, positions[i]), i)
        })
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|k| k.2).collect()
}

/// Executed steps without leader progress before the lead rotates.
pub const STALL_LIMIT: u32 = 8;

/// One joint move of a cached maneuver: (robot, from, to).
pub(crate) type ManeuverStep = Vec<(usize, Vertex, Vertex)>;

/// A coupling group: members, leader, priority queue and the snapshot used
/// by the decoupling test.
#[derive(Clone, Debug)]
pub struct CouplingGroup {
    id: GroupId,
    members: BTreeSet<usize>,
    leader: Option<usize>,
    queue: VecDeque<usize>,
    snapshot: BTreeMap<usize, SnapshotEntry>,
    assignment: SubproblemAssignment,
    maneuver: VecDeque<ManeuverStep>,
    steps_since_snapshot: u64,
    /// Leader and its goal distance when the current exchange began; later
    /// exchanges must beat this distance.
    mark: Option<(usize, u32)>,
    /// Whether the last decision left the leader in place, and for how many
    /// executed steps in a row that happened.
    stalled_now: bool,
    stalled: u32,
    /// Board digest of the last exchange search that failed.
    exchange_miss: Option<u64>,
}

impl CouplingGroup {
    /// Forms a group, snapshotting positions and live contribution values.
    pub fn form(
        id: GroupId,
        members: impl IntoIterator<Item = usize>,
        ctx: &PushPullContext<'_>,
        positions: &[Vertex],
        ledger: &ContributionLedger,
    ) -> Self {
        let mut group = Self {
            id,
            members: members.into_iter().collect(),
            leader: None,
            queue: VecDeque::new(),
            snapshot: BTreeMap::new(),
            assignment: SubproblemAssignment::default(),
            maneuver: VecDeque::new(),
            steps_since_snapshot: 0,
            mark: None,
            stalled_now: false,
            stalled: 0,
            exchange_miss: None,
        };
        group.reprioritise(ctx, positions, ledger);
        group
    }

    pub fn id(&self) -> GroupId {
        self.id
    }

    pub fn members(&self) -> &BTreeSet<usize> {
        &self.members
    }

    pub fn member_list(&self) -> Vec<usize> {
        self.members.iter().copied().collect()
    }

    pub fn contains(&self, robot: usize) -> bool {
        self.members.contains(&robot)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn leader(&self) -> Option<usize> {
        self.leader
    }

    /// H: members waiting to lead, front first.
    pub fn queue(&self) -> Vec<usize> {
        self.queue.iter().copied().collect()
    }

    pub fn snapshot(&self) -> &BTreeMap<usize, SnapshotEntry> {
        &self.snapshot
    }

    pub fn assignment(&self) -> &SubproblemAssignment {
        &self.assignment
    }

    pub fn steps_since_snapshot(&self) -> u64 {
        self.steps_since_snapshot
    }

    pub fn in_maneuver(&self, robot: usize) -> bool {
        self.maneuver.iter().any(|s| s.iter().any(|&(r, from, to)| r == robot && from != to))
    }

    pub fn has_maneuver(&self) -> bool {
        !self.maneuver.is_empty()
    }

    /// Records that the group executed one step.
    pub fn tick(&mut self) {
        self.steps_since_snapshot += 1;
        self.stalled = if self.stalled_now { self.stalled + 1 } else { 0 };
    }

    /// Baseline of the decoupling test for one member.
    pub fn baseline(&self, robot: usize, costs: &GoalDistances) -> Option<i64> {
        self.snapshot.get(&robot).map(|s| s.baseline(costs, robot))
    }

    /// Adds robots, takes a fresh snapshot and re-selects the leader.
    pub fn absorb(
        &mut self,
        robots: impl IntoIterator<Item = usize>,
        ctx: &PushPullContext<'_>,
        positions: &[Vertex],
        ledger: &ContributionLedger,
    ) {
        let before = self.members.len();
        self.members.extend(robots);
        if self.members.len() != before {
            self.reprioritise(ctx, positions, ledger);
        }
    }

    /// Adds a robot displaced by the group without changing the leader; it
    /// joins the back of the queue.
    pub fn recruit(&mut self, robot: usize, positions: &[Vertex], ledger: &ContributionLedger) {
        if self.members.insert(robot) {
            self.snapshot.insert(robot, SnapshotEntry { position: positions[robot], gamma_pre: ledger.gamma(robot) });
            self.queue.push_back(robot);
        }
    }

    /// Drops a member (at its goal, or decoupled).
    pub fn remove(&mut self, robot: usize) {
        self.members.remove(&robot);
        self.snapshot.remove(&robot);
        self.queue.retain(|&r| r != robot);
        if self.leader == Some(robot) {
            self.leader = None;
        }
        if self.in_maneuver(robot) {
            self.maneuver.clear();
        }
    }

    /// Replaces a leader that reached its goal with the head of the queue.
    /// Returns the new leader when it changed.
    pub fn refresh_leader(&mut self, ctx: &PushPullContext<'_>, positions: &[Vertex]) -> Option<usize> {
        self.sync_queue(ctx, positions);
        let done = self.leader.is_none_or(|l| ctx.at_goal(l, positions[l]) || !self.members.contains(&l));
        if !done {
            return None;
        }
        let old = self.leader;
        self.leader = self.queue.pop_front();
        (self.leader != old).then_some(self.leader).flatten()
    }

    fn sync_queue(&mut self, ctx: &PushPullContext<'_>, positions: &[Vertex]) {
        let members = &self.members;
        let leader = self.leader;
        self.queue.retain(|&r| members.contains(&r) && !ctx.at_goal(r, positions[r]) && Some(r) != leader);
        for &m in members {
            if Some(m) != leader && !ctx.at_goal(m, positions[m]) && !self.queue.contains(&m) {
                self.queue.push_back(m);
            }
        }
    }

    fn reprioritise(&mut self, ctx: &PushPullContext<'_>, positions: &[Vertex], ledger: &ContributionLedger) {
        let members = self.member_list();
        self.snapshot = members
            .iter()
            .map(|&i| (i, SnapshotEntry { position: positions[i], gamma_pre: ledger.gamma(i) }))
            .collect();
        self.steps_since_snapshot = 0;
        self.assignment = assign_subproblems(ctx.regions, &members, ctx.costs);
        self.queue = compute_priority(ctx, &members, &self.assignment, positions).into();
        self.leader = self.queue.pop_front();
        self.maneuver.clear();
        self.mark = None;
        self.stalled = 0;
    }

    /// Hands the lead to the next queued member once the current leader has
    /// been stuck for [`STALL_LIMIT`] steps. Returns the new leader.
    fn rotate_if_stalled(&mut self) -> Option<usize> {
        if self.stalled < STALL_LIMIT || self.queue.is_empty() {
            return None;
        }
        let old = self.leader.take()?;
        self.queue.push_back(old);
        self.leader = self.queue.pop_front();
        self.mark = None;
        self.stalled = 0;
        self.leader
    }
}

/// Union of two groups (or of a group and an empty one) with a fresh
/// snapshot; keeps the smaller id.
pub fn merge(
    a: CouplingGroup,
    b: CouplingGroup,
    ctx: &PushPullContext<'_>,
    positions: &[Vertex],
    ledger: &ContributionLedger,
) -> CouplingGroup {
    let (mut keep, other) = if a.id <= b.id { (a, b) } else { (b, a) };
    if other.members.is_empty() {
        return keep;
    }
    keep.members.extend(other.members);
    keep.reprioritise(ctx, positions, ledger);
    keep
}

/// Both sides of the group decoupling inequality.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecoupleCheck {
    pub holds: bool,
    /// Sum of snapshot costs plus pre-coupling contribution values.
    pub lhs: i64,
    /// Sum of current costs.
    pub rhs: i64,
}

/// Whether the members are jointly closer to their goals than when the
/// snapshot was taken, after at least one executed step.
pub fn check_decouple(
    group: &CouplingGroup,
    positions_now: &[Vertex],
    costs: &GoalDistances,
) -> Result<DecoupleCheck, PushPullError> {
    if group.snapshot.is_empty() {
        return Err(PushPullError::EmptySnapshot { group: group.id });
    }
    let lhs: i64 = group.snapshot.iter().map(|(&i, s)| s.baseline(costs, i)).sum();
    let rhs: i64 = group.snapshot.keys().map(|&i| costs.cost(i, positions_now[i]) as i64).sum();
    Ok(DecoupleCheck { holds: group.steps_since_snapshot > 0 && lhs > rhs, lhs, rhs })
}

/// Runs the group on its own until every member is at its goal, treating
/// all other robots as fixed obstacles. Returns each member's path.
pub fn push_and_pull(
    ctx: &PushPullContext<'_>,
    group: &CouplingGroup,
    positions: &[Vertex],
) -> Result<BTreeMap<usize, Vec<Vertex>>, PushPullError> {
    let mut group = group.clone();
    let mut pos = positions.to_vec();
    let mut paths: BTreeMap<usize, Vec<Vertex>> = group.members.iter().map(|&i| (i, vec![pos[i]])).collect();
    let cap = 4 * ctx.g.vertex_count() * group.len().max(1) + 64;
    let never = |_: usize| false;
    for _ in 0..cap {
        if group.members.iter().all(|&i| ctx.at_goal(i, pos[i])) {
            return Ok(paths);
        }
        group.refresh_leader(ctx, &pos);
        let next: Vec<Option<Vertex>> =
            (0..pos.len()).map(|i| if group.contains(i) { None } else { Some(pos[i]) }).collect();
        let view = StepView { positions: &pos, next: &next, recruitable: &never };
        let decision = group.decide(ctx, &view)?;
        for &(r, v) in &decision.moves {
            pos[r] = v;
        }
        for (&i, path) in paths.iter_mut() {
            path.push(pos[i]);
        }
        group.tick();
    }
    Err(PushPullError::InfeasibleGroup { group: group.id })
}
