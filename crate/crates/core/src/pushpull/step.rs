use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::hash::{Hash, Hasher};

use rustc_hash::FxHasher;

use super::search::{joint_bfs, SearchResult};
use super::{CouplingGroup, ManeuverStep, PushPullContext, PushPullError};
use crate::world::Vertex;

/// What the rest of the world does during the step being decided.
pub struct StepView<'a> {
    /// Current position of every robot.
    pub positions: &'a [Vertex],
    /// Next cell of every robot outside the group; ignored for members.
    pub next: &'a [Option<Vertex>],
    /// Stationary non-members the group may displace and recruit.
    pub recruitable: &'a dyn Fn(usize) -> bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operator {
    /// No member needs to move.
    Idle,
    Maneuver,
    Exact,
    Advance,
    Push,
    Exchange,
    Pull,
    Wait,
}

impl Operator {
    pub fn name(self) -> &'static str {
        match self {
            Operator::Idle => "idle",
            Operator::Maneuver => "maneuver",
            Operator::Exact => "exact",
            Operator::Advance => "advance",
            Operator::Push => "push",
            Operator::Exchange => "exchange",
            Operator::Pull => "pull",
            Operator::Wait => "wait",
        }
    }
}

/// One joint step for a group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepDecision {
    /// Target cell of every member and recruit (equal to the current cell
    /// for robots that stay).
    pub moves: Vec<(usize, Vertex)>,
    /// Non-members displaced by this step; they must join the group.
    pub recruits: Vec<usize>,
    pub operator: Operator,
    /// Outsiders that cannot be displaced and obstruct the leader.
    pub blocked_by: Vec<usize>,
}

struct Board<'a> {
    view: &'a StepView<'a>,
    occupant: HashMap<Vertex, usize>,
    /// Next cells of outsiders the group cannot move.
    fixed_next: HashMap<Vertex, usize>,
    members: Vec<usize>,
    pushable: HashSet<usize>,
    /// Robots other than the leader that sit on their own goals; only
    /// exchanges move them, and those put them back.
    resting: HashSet<usize>,
}

impl<'a> Board<'a> {
    fn new(group: &CouplingGroup, view: &'a StepView<'a>, ctx: &PushPullContext<'_>) -> Self {
        let mut occupant = HashMap::new();
        let mut fixed_next = HashMap::new();
        let mut pushable = HashSet::new();
        for (r, &p) in view.positions.iter().enumerate() {
            occupant.insert(p, r);
            if group.contains(r) {
                continue;
            }
            let next = view.next[r].unwrap_or(p);
            if next == p && (view.recruitable)(r) {
                pushable.insert(r);
            } else {
                fixed_next.insert(next, r);
            }
        }
        let resting = pushable
            .iter()
            .copied()
            .chain(group.members.iter().copied().filter(|&m| Some(m) != group.leader && ctx.at_goal(m, view.positions[m])))
            .collect();
        Self { view, occupant, fixed_next, members: group.member_list(), pushable, resting }
    }

    /// Digest of everything a local search on this board depends on.
    fn fingerprint(&self, leader: usize, target: u32) -> u64 {
        let mut h = FxHasher::default();
        (leader, target).hash(&mut h);
        self.view.positions.hash(&mut h);
        for (r, n) in self.view.next.iter().enumerate() {
            if !self.members.contains(&r) {
                n.hash(&mut h);
            }
        }
        self.members.hash(&mut h);
        let mut resting: Vec<usize> = self.resting.iter().copied().collect();
        resting.sort_unstable();
        resting.hash(&mut h);
        let mut pushable: Vec<usize> = self.pushable.iter().copied().collect();
        pushable.sort_unstable();
        pushable.hash(&mut h);
        h.finish()
    }

    fn pos(&self, r: usize) -> Vertex {
        self.view.positions[r]
    }

    fn is_fixed(&self, r: usize) -> bool {
        !self.members.contains(&r) && !self.pushable.contains(&r)
    }

    fn movable(&self, r: usize) -> bool {
        !self.is_fixed(r)
    }

    /// Cell permanently unusable for this step's searches: held by an outsider
    /// that cannot be displaced, now or next.
    fn hard_blocked(&self, v: Vertex) -> bool {
        self.fixed_next.contains_key(&v) || self.occupant.get(&v).is_some_and(|&r| self.is_fixed(r))
    }

    /// Next position of every robot given targets for some movable robots.
    fn next_positions(&self, targets: &BTreeMap<usize, Vertex>) -> Vec<Vertex> {
        (0..self.view.positions.len())
            .map(|r| {
                if let Some(&t) = targets.get(&r) {
                    t
                } else if self.is_fixed(r) {
                    self.view.next[r].unwrap_or(self.pos(r))
                } else {
                    self.pos(r)
                }
            })
            .collect()
    }

    /// Whether the joint step defined by `targets` is free of vertex and
    /// swap conflicts.
    fn valid(&self, targets: &BTreeMap<usize, Vertex>) -> bool {
        let next = self.next_positions(targets);
        let mut seen: HashMap<Vertex, usize> = HashMap::new();
        for (r, &v) in next.iter().enumerate() {
            if seen.insert(v, r).is_some() {
                return false;
            }
        }
        for (&r, &to) in targets {
            let from = self.pos(r);
            if from == to {
                continue;
            }
            if let Some(&o) = self.occupant.get(&to) {
                if next[o] == from {
                    return false;
                }
            }
        }
        true
    }

    fn to_moves(&self, targets: &BTreeMap<usize, Vertex>) -> (Vec<(usize, Vertex)>, Vec<usize>) {
        let mut moves: Vec<(usize, Vertex)> =
            self.members.iter().map(|&m| (m, targets.get(&m).copied().unwrap_or(self.pos(m)))).collect();
        let recruits: Vec<usize> = targets.keys().copied().filter(|r| !self.members.contains(r)).collect();
        for &r in &recruits {
            moves.push((r, targets[&r]));
        }
        (moves, recruits)
    }
}

impl CouplingGroup {
    /// Chooses the group's next joint step.
    ///
    /// Operators are tried in order: continue a cached maneuver, exact joint
    /// search for tiny groups, leader advance, push, local exchange, pull,
    /// wait. Members not moved by the operator are pulled towards the leader
    /// when they would otherwise lose contact.
    pub fn decide(&mut self, ctx: &PushPullContext<'_>, view: &StepView<'_>) -> Result<StepDecision, PushPullError> {
        let positions = view.positions;
        if self.leader.is_none_or(|l| ctx.at_goal(l, positions[l])) {
            self.refresh_leader(ctx, positions);
        } else {
            self.sync_queue(ctx, positions);
            self.rotate_if_stalled();
        }
        self.stalled_now = false;
        let board = Board::new(self, view, ctx);

        if let Some(d) = self.follow_maneuver(&board) {
            return Ok(d);
        }
        if let Some(d) = self.exact(ctx, &board)? {
            return Ok(d);
        }
        let Some(leader) = self.leader else {
            let (moves, recruits) = board.to_moves(&BTreeMap::new());
            return Ok(StepDecision { moves, recruits, operator: Operator::Idle, blocked_by: vec![] });
        };

        let mut blocked_by = Vec::new();
        if let Some((targets, op)) = self.advance_or_push(ctx, &board, leader, &mut blocked_by) {
            let mut with_pull = targets.clone();
            if self.pull(ctx, &board, leader, &mut with_pull) {
                let (moves, recruits) = board.to_moves(&with_pull);
                return Ok(StepDecision { moves, recruits, operator: op, blocked_by });
            }
        }
        if let Some(d) = self.exchange(ctx, &board, leader) {
            return Ok(d);
        }
        self.stalled_now = true;
        let mut targets = BTreeMap::new();
        self.pull(ctx, &board, leader, &mut targets);
        let (moves, recruits) = board.to_moves(&targets);
        let operator = if targets.is_empty() { Operator::Wait } else { Operator::Pull };
        blocked_by.sort_unstable();
        blocked_by.dedup();
        Ok(StepDecision { moves, recruits, operator, blocked_by })
    }

    /// Trajectories (t = 0 now) the group expects to follow after `decision`:
    /// the cached maneuver when present, otherwise the leader walks its route
    /// while the rest stay.
    pub fn predict(
        &self,
        ctx: &PushPullContext<'_>,
        decision: &StepDecision,
        positions: &[Vertex],
        horizon: usize,
    ) -> BTreeMap<usize, Vec<Vertex>> {
        let mut out: BTreeMap<usize, Vec<Vertex>> = BTreeMap::new();
        for &(r, v) in &decision.moves {
            out.insert(r, vec![positions[r], v]);
        }
        for t in 2..=horizon {
            let step = self.maneuver.get(t - 2);
            for (&r, traj) in out.iter_mut() {
                let last = *traj.last().unwrap();
                let next = match step {
                    Some(s) => s.iter().find(|e| e.0 == r).map_or(last, |e| e.2),
                    None if Some(r) == self.leader && self.maneuver.is_empty() => {
                        ctx.costs.next_step(ctx.g, r, last).unwrap_or(last)
                    }
                    None => last,
                };
                traj.push(next);
            }
        }
        out
    }

    fn follow_maneuver(&mut self, board: &Board<'_>) -> Option<StepDecision> {
        let step = self.maneuver.front()?;
        let ok = step.iter().all(|&(r, from, _)| board.pos(r) == from && board.movable(r));
        let targets: BTreeMap<usize, Vertex> = step.iter().map(|&(r, _, to)| (r, to)).collect();
        if !ok || !board.valid(&targets) {
            self.maneuver.clear();
            return None;
        }
        self.maneuver.pop_front();
        let (moves, recruits) = board.to_moves(&targets);
        Some(StepDecision { moves, recruits, operator: Operator::Maneuver, blocked_by: vec![] })
    }

    fn exact(&mut self, ctx: &PushPullContext<'_>, board: &Board<'_>) -> Result<Option<StepDecision>, PushPullError> {
        let mut participants: Vec<usize> = board.members.clone();
        let mut extra: Vec<usize> = board.pushable.iter().copied().collect();
        extra.sort_unstable();
        participants.extend(extra);
        let cells: Vec<Vertex> = ctx.g.vertices().filter(|&v| !board.hard_blocked(v)).collect();
        let product = (cells.len() as f64).powi(participants.len() as i32);
        if participants.is_empty() || product > ctx.limits.exact_state_budget as f64 {
            return Ok(None);
        }
        let start: Vec<Vertex> = participants.iter().map(|&r| board.pos(r)).collect();
        let goals: Vec<Vertex> = participants.iter().map(|&r| ctx.costs.goal(r)).collect();
        if start == goals {
            return Ok(None);
        }
        match joint_bfs(ctx.g, &start, &cells, |s| s == goals.as_slice(), usize::MAX) {
            SearchResult::Found(steps) => {
                self.install_maneuver(&participants, &start, steps);
                Ok(self.follow_maneuver(board).map(|d| StepDecision { operator: Operator::Exact, ..d }))
            }
            SearchResult::Exhausted if participants.len() == board.view.positions.len() => {
                Err(PushPullError::InfeasibleGroup { group: self.id })
            }
            _ => Ok(None),
        }
    }

    fn install_maneuver(&mut self, participants: &[usize], start: &[Vertex], steps: Vec<Vec<Vertex>>) {
        self.maneuver.clear();
        let mut prev = start.to_vec();
        for state in steps {
            let step: ManeuverStep = participants.iter().enumerate().map(|(p, &r)| (r, prev[p], state[p])).collect();
            self.maneuver.push_back(step);
            prev = state;
        }
    }

    fn advance_or_push(
        &self,
        ctx: &PushPullContext<'_>,
        board: &Board<'_>,
        leader: usize,
        blocked_by: &mut Vec<usize>,
    ) -> Option<(BTreeMap<usize, Vertex>, Operator)> {
        let here = board.pos(leader);
        let route = leader_route(ctx, board, leader);
        let &c = route.first()?;
        if let Some(&o) = board.fixed_next.get(&c) {
            blocked_by.push(o);
            return None;
        }
        let mut targets = BTreeMap::from([(leader, c)]);
        match board.occupant.get(&c) {
            None => return board.valid(&targets).then_some((targets, Operator::Advance)),
            Some(&o) if board.is_fixed(o) => {
                // follow an outsider that is leaving
                if board.valid(&targets) {
                    return Some((targets, Operator::Advance));
                }
                blocked_by.push(o);
                return None;
            }
            Some(_) => {}
        }
        let route_set: HashSet<Vertex> = route.iter().copied().collect();
        let path = self.push_path(ctx, board, here, c, &route_set)?;
        for w in path.windows(2) {
            match board.occupant.get(&w[0]) {
                Some(&r) => {
                    targets.insert(r, w[1]);
                }
                None => break,
            }
        }
        board.valid(&targets).then_some((targets, Operator::Push))
    }

    /// Shortest path from `c` to the nearest empty cell off the leader's
    /// route, through cells whose occupants the group may move.
    fn push_path(
        &self,
        ctx: &PushPullContext<'_>,
        board: &Board<'_>,
        leader_pos: Vertex,
        c: Vertex,
        route: &HashSet<Vertex>,
    ) -> Option<Vec<Vertex>> {
        // robots resting at their goals are only moved by exchanges, which
        // put them back
        push_search(ctx, board, leader_pos, c, route)
    }

    fn exchange(&mut self, ctx: &PushPullContext<'_>, board: &Board<'_>, leader: usize) -> Option<StepDecision> {
        let now = ctx.costs.cost(leader, board.pos(leader));
        let target = match self.mark {
            Some((l, c)) if l == leader && c <= now => c,
            _ => now,
        };
        if let Some(d) = self.exchange_below(ctx, board, leader, target) {
            self.mark = Some((leader, target));
            return Some(d);
        }
        // the committed target may have become unreachable after interference
        self.mark = None;
        if target != now {
            return self.exchange_below(ctx, board, leader, now);
        }
        None
    }

    /// Local joint search that brings the leader strictly below `target`.
    fn exchange_below(
        &mut self,
        ctx: &PushPullContext<'_>,
        board: &Board<'_>,
        leader: usize,
        target: u32,
    ) -> Option<StepDecision> {
        // the same board yields the same failure
        let key = board.fingerprint(leader, target);
        if self.exchange_miss == Some(key) {
            return None;
        }
        let here = board.pos(leader);
        let route: HashSet<Vertex> = leader_route(ctx, board, leader).into_iter().collect();
        for &w in &ctx.limits.exchange_windows {
            let window: Vec<Vertex> = ctx
                .g
                .vertices()
                .filter(|&v| ctx.g.chebyshev(v, here) <= w && !board.hard_blocked(v))
                .collect();
            let mut others: Vec<usize> = window
                .iter()
                .filter_map(|v| board.occupant.get(v).copied())
                .filter(|&r| r != leader && board.movable(r))
                .collect();
            others.sort_by_key(|&r| (!route.contains(&board.pos(r)), ctx.g.chebyshev(board.pos(r), here), r));
            let keep = ctx.limits.exchange_participants.saturating_sub(1).min(others.len());
            let frozen: HashSet<Vertex> = others[keep..].iter().map(|&r| board.pos(r)).collect();
            others.truncate(keep);
            let cells: Vec<Vertex> = window.into_iter().filter(|v| !frozen.contains(v)).collect();
            let mut participants = vec![leader];
            participants.extend(&others);
            let start: Vec<Vertex> = participants.iter().map(|&r| board.pos(r)).collect();
            let home: Vec<(usize, Vertex)> = participants
                .iter()
                .enumerate()
                .filter(|(_, r)| board.resting.contains(r))
                .map(|(p, &r)| (p, ctx.costs.goal(r)))
                .collect();
            let goal =
                |s: &[Vertex]| ctx.costs.cost(leader, s[0]) < target && home.iter().all(|&(p, v)| s[p] == v);
            match joint_bfs(ctx.g, &start, &cells, goal, ctx.limits.exchange_budget) {
                SearchResult::Found(steps) => {
                    self.install_maneuver(&participants, &start, steps);
                    return self.follow_maneuver(board).map(|d| StepDecision { operator: Operator::Exchange, ..d });
                }
                SearchResult::OverBudget => break,
                SearchResult::Exhausted => {}
            }
        }
        self.exchange_miss = Some(key);
        None
    }

    /// Moves members that would lose contact with the leader one step towards
    /// it. Returns whether every member not resting at its goal ends up
    /// connected to the leader over the sensing graph of all robots.
    fn pull(
        &self,
        ctx: &PushPullContext<'_>,
        board: &Board<'_>,
        leader: usize,
        targets: &mut BTreeMap<usize, Vertex>,
    ) -> bool {
        let mut disconnected = self.disconnected(ctx, board, leader, targets);
        if disconnected.is_empty() {
            return true;
        }
        let anchor = board.next_positions(targets)[leader];
        let field = ctx.g.distances_from(anchor);
        disconnected.sort_by_key(|&m| (field.get(board.pos(m)).unwrap_or(u32::MAX), m));
        for m in disconnected {
            let from = board.pos(m);
            let mut options: Vec<Vertex> = ctx.g.neighbors(from).to_vec();
            options.sort_by_key(|&v| (field.get(v).unwrap_or(u32::MAX), v));
            let here_d = field.get(from).unwrap_or(u32::MAX);
            for v in options {
                if field.get(v).unwrap_or(u32::MAX) >= here_d {
                    break;
                }
                if board.occupant.get(&v).is_some_and(|&o| !targets.contains_key(&o) || targets[&o] == v) {
                    continue;
                }
                targets.insert(m, v);
                if board.valid(targets) {
                    break;
                }
                targets.remove(&m);
            }
        }
        self.disconnected(ctx, board, leader, targets).is_empty()
    }

    fn disconnected(
        &self,
        ctx: &PushPullContext<'_>,
        board: &Board<'_>,
        leader: usize,
        targets: &BTreeMap<usize, Vertex>,
    ) -> Vec<usize> {
        let next = board.next_positions(targets);
        let mut reached = vec![false; next.len()];
        reached[leader] = true;
        let mut stack = vec![leader];
        while let Some(a) = stack.pop() {
            for b in 0..next.len() {
                if !reached[b] && ctx.cfg.senses(ctx.g, next[a], next[b]) {
                    reached[b] = true;
                    stack.push(b);
                }
            }
        }
        // members resting at their goals may drop out of contact; goals can lie
        // further apart than the sensing range
        board
            .members
            .iter()
            .copied()
            .filter(|&m| !reached[m] && !(board.resting.contains(&m) && next[m] == board.pos(m)))
            .collect()
    }
}

fn push_search(
    ctx: &PushPullContext<'_>,
    board: &Board<'_>,
    leader_pos: Vertex,
    c: Vertex,
    route: &HashSet<Vertex>,
) -> Option<Vec<Vertex>> {
    let parked = |w: Vertex| board.occupant.get(&w).is_some_and(|r| board.resting.contains(r));
    if parked(c) {
        return None;
    }
    let mut parent: HashMap<Vertex, Vertex> = HashMap::from([(c, c)]);
    let mut queue = VecDeque::from([c]);
    while let Some(v) = queue.pop_front() {
        if v != c && !board.occupant.contains_key(&v) && !route.contains(&v) {
            let mut path = vec![v];
            let mut at = v;
            while at != c {
                at = parent[&at];
                path.push(at);
            }
            path.reverse();
            return Some(path);
        }
        for &w in ctx.g.neighbors(v) {
            if w == leader_pos || board.hard_blocked(w) || parent.contains_key(&w) || parked(w) {
                continue;
            }
            parent.insert(w, v);
            queue.push_back(w);
        }
    }
    None
}

/// A shortest route from the leader to its goal; among equally short
/// routes, the one passing fewest robots that rest at their own goals.
fn leader_route(ctx: &PushPullContext<'_>, board: &Board<'_>, leader: usize) -> Vec<Vertex> {
    let here = board.pos(leader);
    let direct = ctx.costs.route(ctx.g, leader, here);
    let parked: HashSet<Vertex> = board.resting.iter().map(|&r| board.pos(r)).collect();
    if !direct.iter().any(|v| parked.contains(v)) {
        return direct;
    }
    // fewest parked cells from each vertex to the goal along shortest routes
    let field = ctx.costs.map(leader);
    let mut best: HashMap<Vertex, u32> = HashMap::new();
    fn count(
        v: Vertex,
        ctx: &PushPullContext<'_>,
        field: &crate::world::DistanceMap,
        parked: &HashSet<Vertex>,
        best: &mut HashMap<Vertex, u32>,
    ) -> u32 {
        if let Some(&c) = best.get(&v) {
            return c;
        }
        let d = field.at(v);
        let own = parked.contains(&v) as u32;
        let rest = if d == 0 {
            0
        } else {
            ctx.g
                .neighbors(v)
                .iter()
                .filter(|w| field.get(**w) == Some(d - 1))
                .map(|&w| count(w, ctx, field, parked, best))
                .min()
                .unwrap_or(0)
        };
        best.insert(v, own + rest);
        own + rest
    }
    let mut route = Vec::with_capacity(direct.len());
    let mut at = here;
    while field.at(at) > 0 {
        let d = field.at(at);
        at = *ctx
            .g
            .neighbors(at)
            .iter()
            .filter(|w| field.get(**w) == Some(d - 1))
            .min_by_key(|&&w| count(w, ctx, field, &parked, &mut best))
            .unwrap();
        route.push(at);
    }
    route
}

