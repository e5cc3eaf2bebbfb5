use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::trace::*;
use super::{default_step_budget, leader_for, Mode, RunConfig, StepDuration};
use crate::convergence::{converge, update_contribution, ContributionLedger, ConvergeRequest};
use crate::coordination::{components, pair_conflict, project, sense_conflict_filtered, Closure};
use crate::pushpull::{
    check_decouple, merge, CouplingGroup, GroupId, PushPullContext, PushPullError, Regions, StepDecision, StepView,
};
use crate::world::{GoalDistances, Scenario, Vertex, WorldGraph};

/// Rounds of sense, converge or couple before a release gives up and lets
/// the final guard settle the step.
const MAX_RESOLVE_ROUNDS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Waiting,
    InFlight,
    Idle,
}

pub(super) fn simulate(scenario: &Scenario, cfg: &RunConfig) -> Trace {
    let costs = GoalDistances::for_scenario(scenario);
    let regions = Regions::compute(scenario.graph());
    let ctx = PushPullContext {
        g: scenario.graph(),
        costs: &costs,
        regions: &regions,
        cfg: cfg.sensing,
        limits: cfg.limits.clone(),
    };
    let mut sim = Sim::new(scenario, cfg, ctx);
    let outcome = sim.run();
    sim.finish(outcome)
}

struct Sim<'a> {
    scenario: &'a Scenario,
    cfg: &'a RunConfig,
    ctx: PushPullContext<'a>,
    n: usize,
    goals: Vec<Vertex>,
    /// Cell the robot occupies, or is heading to while in flight.
    claim: Vec<Vertex>,
    claims: HashMap<Vertex, usize>,
    /// Cell of the last completed step.
    landed: Vec<Vertex>,
    /// Claims when the current batch's closures were computed.
    batch_claim: Vec<Vertex>,
    status: Vec<Status>,
    step: Vec<u64>,
    plan: Vec<VecDeque<Vertex>>,
    group_of: Vec<Option<GroupId>>,
    groups: BTreeMap<GroupId, CouplingGroup>,
    next_group: GroupId,
    ledger: ContributionLedger,
    rngs: Vec<ChaCha8Rng>,
    waiting_since: Vec<u64>,
    q_pending: Vec<bool>,
    tags: Vec<(u32, Option<u32>)>,
    heap: BinaryHeap<Reverse<(u64, usize)>>,
    now: u64,
    budget: u64,
    trace: Trace,
}

impl<'a> Sim<'a> {
    fn new(scenario: &'a Scenario, cfg: &'a RunConfig, ctx: PushPullContext<'a>) -> Self {
        let n = scenario.robot_count();
        let g = scenario.graph();
        let starts = scenario.starts();
        let seed = cfg.seed.unwrap_or(scenario.seed());
        let rngs = (0..n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                rng
            })
            .collect();
        let plan = (0..n).map(|i| ctx.costs.route(g, i, starts[i]).into()).collect();
        let robot_ids: Vec<u32> = scenario.robots().iter().map(|r| r.id).collect();
        let rows = (0..n)
            .map(|i| TraceRow { robot: i, step: 0, position: starts[i], sim_time: 0, oc_id: robot_ids[i], group_id: None })
            .collect();
        Self {
            scenario,
            cfg,
            n,
            goals: scenario.goals(),
            claims: starts.iter().enumerate().map(|(i, &v)| (v, i)).collect(),
            landed: starts.clone(),
            batch_claim: starts.clone(),
            claim: starts,
            status: vec![Status::Waiting; n],
            step: vec![0; n],
            plan,
            group_of: vec![None; n],
            groups: BTreeMap::new(),
            next_group: 0,
            ledger: ContributionLedger::new(n),
            rngs,
            waiting_since: vec![0; n],
            q_pending: vec![false; n],
            tags: vec![(0, None); n],
            heap: BinaryHeap::new(),
            now: 0,
            budget: cfg.step_budget.unwrap_or_else(|| default_step_budget(scenario)),
            trace: Trace {
                outcome: Outcome::Completed,
                robot_ids,
                width: g.width(),
                rows,
                events: Vec::new(),
                releases: Vec::new(),
                certificates: Vec::new(),
                completions: Vec::new(),
                violations: Vec::new(),
                connectivity_breaks: 0,
                arrival_steps: vec![0; n],
                planning_time: Duration::ZERO,
            },
            ctx,
        }
    }

    fn g(&self) -> &'a WorldGraph {
        self.scenario.graph()
    }

    fn log(&mut self, kind: EventKind, robot: Option<usize>, detail: String) {
        self.trace.events.push(SimEvent { time: self.now, kind, robot, detail });
    }

    fn xy(&self, v: Vertex) -> String {
        let (x, y) = self.g().coords(v);
        format!("({x},{y})")
    }

    fn ids(&self, robots: &[usize]) -> String {
        robots.iter().map(|&r| self.trace.robot_ids[r].to_string()).collect::<Vec<_>>().join(",")
    }

    fn run(&mut self) -> Outcome {
        loop {
            if let Err(group) = self.release_all() {
                return Outcome::Infeasible { group };
            }
            if self.status.iter().all(|&s| s == Status::Idle) {
                return Outcome::Completed;
            }
            let Some(&Reverse((t, _))) = self.heap.peek() else {
                // nothing in flight and nothing releasable cannot happen: every
                // waiting robot belongs to a closure without robots in flight
                unreachable!("executor stalled with no pending events");
            };
            self.now = t;
            while let Some(&Reverse((t2, r))) = self.heap.peek() {
                if t2 != t {
                    break;
                }
                self.heap.pop();
                self.land(r);
            }
            if self.step.iter().any(|&s| s >= self.budget) {
                return Outcome::BudgetExceeded { budget: self.budget };
            }
        }
    }

    fn finish(mut self, outcome: Outcome) -> Trace {
        self.trace.outcome = outcome;
        self.trace.rows.sort_by_key(|r| (r.robot, r.step));
        self.trace
    }

    fn land(&mut self, r: usize) {
        let before = std::mem::replace(&mut self.landed[r], self.claim[r]);
        self.status[r] = Status::Waiting;
        self.step[r] += 1;
        self.waiting_since[r] = self.now;
        let here = self.claim[r];
        let (oc_id, group_id) = self.tags[r];
        self.trace.rows.push(TraceRow { robot: r, step: self.step[r], position: here, sim_time: self.now, oc_id, group_id });
        if here == self.goals[r] && before != here {
            self.trace.arrival_steps[r] = self.step[r];
        }
        self.log(EventKind::StepComplete, Some(r), format!("step={} at={}", self.step[r], self.xy(here)));
        if std::mem::take(&mut self.q_pending[r]) {
            let Some(lg) = self.ledger.local_goal(r) else { return };
            let delta = self.ledger.advance_local(r).expect("local plan is active");
            let gamma = update_contribution(&mut self.ledger, r, delta, here, self.ctx.costs).expect("delta within plan");
            if delta == lg.len {
                self.trace.completions.push(LocalCompletion {
                    time: self.now,
                    robot: r,
                    position: here,
                    local_goal: lg.vertex,
                    gamma,
                });
                self.log(EventKind::LocalGoalReached, Some(r), format!("at={} gamma={gamma}", self.xy(here)));
            }
        }
    }

    fn linked(&self, a: usize, b: usize) -> bool {
        self.cfg.sensing.senses(self.g(), self.claim[a], self.claim[b])
            || (self.group_of[a].is_some() && self.group_of[a] == self.group_of[b])
    }

    fn closures(&self) -> Vec<Vec<usize>> {
        components(self.n, |a, b| self.linked(a, b))
    }

    fn has_work(&self, r: usize) -> bool {
        self.group_of[r].is_some()
            || !self.plan[r].is_empty()
            || self.claim[r] != self.goals[r]
            || self.ledger.local_goal(r).is_some()
    }

    fn release_all(&mut self) -> Result<(), GroupId> {
        self.batch_claim = self.claim.clone();
        for oc in self.closures() {
            if oc.iter().any(|&r| self.status[r] == Status::InFlight) {
                if self.cfg.sync_only_on_conflict {
                    self.solo_releases(&oc);
                }
                continue;
            }
            if oc.iter().all(|&r| self.status[r] == Status::Idle) {
                continue;
            }
            let start = Instant::now();
            self.group_post_step(&oc);
            // post-step processing may have split a group off
            let mut parts: Vec<Vec<usize>> = components(oc.len(), |a, b| self.linked(oc[a], oc[b]))
                .into_iter()
                .map(|idx| idx.into_iter().map(|k| oc[k]).collect())
                .collect();
            parts.sort();
            self.trace.planning_time += start.elapsed();
            for phi in parts {
                if !phi.iter().any(|&r| self.has_work(r)) {
                    for &r in &phi {
                        if self.status[r] != Status::Idle {
                            self.status[r] = Status::Idle;
                            self.log(EventKind::Idle, Some(r), format!("at={}", self.xy(self.claim[r])));
                        }
                    }
                    continue;
                }
                self.release(&phi)?;
            }
        }
        Ok(())
    }

    /// Updates contribution values, drops members at their goals, replaces
    /// leaders and runs the decoupling test for groups inside `phi`.
    fn group_post_step(&mut self, phi: &[usize]) {
        let gids: BTreeSet<GroupId> = phi.iter().filter_map(|&r| self.group_of[r]).collect();
        for gid in gids {
            let mut group = self.groups.remove(&gid).unwrap();
            if self.cfg.mode == Mode::DiscofPlus {
                for m in group.member_list() {
                    if let Some(b) = group.baseline(m, self.ctx.costs) {
                        self.ledger.set_gamma(m, b - self.ctx.costs.cost(m, self.claim[m]) as i64);
                    }
                }
            }
            for m in group.member_list() {
                if self.claim[m] == self.goals[m] && !group.in_maneuver(m) {
                    group.remove(m);
                    self.ledger.reset(m);
                    self.group_of[m] = None;
                    self.plan[m].clear();
                    self.log(EventKind::GoalRemove, Some(m), format!("group={gid}"));
                }
            }
            if group.is_empty() {
                self.log(EventKind::Dissolve, None, format!("group={gid}"));
                continue;
            }
            if let Some(l) = group.refresh_leader(&self.ctx, &self.claim) {
                self.log(EventKind::LeaderChange, Some(l), format!("group={gid}"));
            }
            if self.cfg.mode == Mode::DiscofPlus && group.steps_since_snapshot() > 0 {
                if let Ok(check) = check_decouple(&group, &self.claim, self.ctx.costs) {
                    if check.holds {
                        self.decouple(group, check.lhs, check.rhs);
                        continue;
                    }
                }
            }
            self.groups.insert(gid, group);
        }
    }

    fn decouple(&mut self, group: CouplingGroup, lhs: i64, rhs: i64) {
        let members: Vec<CertificateMember> = group
            .snapshot()
            .iter()
            .map(|(&r, s)| CertificateMember { robot: r, origin: s.position, gamma_pre: s.gamma_pre, target: self.claim[r] })
            .collect();
        self.trace.certificates.push(Certificate {
            time: self.now,
            kind: CertificateKind::Decouple,
            group: Some(group.id()),
            members,
            lhs,
            rhs,
        });
        let list = group.member_list();
        self.log(EventKind::Decouple, None, format!("group={} robots={} lhs={lhs} rhs={rhs}", group.id(), self.ids(&list)));
        for m in list {
            self.ledger.reset(m);
            self.group_of[m] = None;
            self.plan[m] = self.ctx.costs.route(self.g(), m, self.claim[m]).into();
        }
    }

    fn intended(&self, r: usize) -> Vertex {
        self.plan[r].front().copied().unwrap_or(self.claim[r])
    }

    fn trajectory(&self, r: usize) -> Vec<Vertex> {
        let h = self.cfg.sensing.beta as usize;
        if self.group_of[r].is_some() {
            project(self.claim[r], [], h)
        } else {
            project(self.claim[r], self.plan[r].iter().copied(), h)
        }
    }

    fn new_group(&mut self, members: Vec<usize>) -> GroupId {
        let gid = self.next_group;
        self.next_group += 1;
        for &m in &members {
            self.group_of[m] = Some(gid);
            self.ledger.end_local(m);
            self.plan[m].clear();
        }
        let group = CouplingGroup::form(gid, members.iter().copied(), &self.ctx, &self.claim, &self.ledger);
        self.log(EventKind::GroupForm, group.leader(), format!("group={gid} robots={}", self.ids(&members)));
        self.groups.insert(gid, group);
        gid
    }

    /// Merges groups `gids` and adds `extra` robots; returns the survivor.
    fn merge_into(&mut self, gids: &BTreeSet<GroupId>, extra: &[usize]) -> GroupId {
        let mut iter = gids.iter();
        let first = *iter.next().unwrap();
        let mut group = self.groups.remove(&first).unwrap();
        for gid in iter {
            let other = self.groups.remove(gid).unwrap();
            group = merge(group, other, &self.ctx, &self.claim, &self.ledger);
        }
        let fresh: Vec<usize> = extra.iter().copied().filter(|&r| !group.contains(r)).collect();
        for &r in &fresh {
            self.ledger.end_local(r);
            self.plan[r].clear();
        }
        // a fresh snapshot after any merge
        let absorbed = gids.len() > 1 || !fresh.is_empty();
        group.absorb(fresh, &self.ctx, &self.claim, &self.ledger);
        let gid = group.id();
        for m in group.member_list() {
            self.group_of[m] = Some(gid);
        }
        if absorbed {
            let list = group.member_list();
            self.log(EventKind::GroupMerge, group.leader(), format!("group={gid} robots={}", self.ids(&list)));
        }
        self.groups.insert(gid, group);
        gid
    }

    fn recruitable(&self, r: usize, phi: &BTreeSet<usize>, taken: &BTreeSet<usize>) -> bool {
        phi.contains(&r)
            && self.group_of[r].is_none()
            && !taken.contains(&r)
            && self.claim[r] == self.goals[r]
            && self.plan[r].is_empty()
            && self.ledger.local_goal(r).is_none()
    }

    /// Group decisions for this release. `Err` carries an infeasible group;
    /// `Ok(None)` means groups were merged and decisions must be redone.
    fn decide_groups(&mut self, phi: &BTreeSet<usize>) -> Result<Option<BTreeMap<GroupId, StepDecision>>, GroupId> {
        let gids: Vec<GroupId> = phi.iter().filter_map(|&r| self.group_of[r]).collect::<BTreeSet<_>>().into_iter().collect();
        let mut decided: BTreeMap<usize, Vertex> = BTreeMap::new();
        let mut taken: BTreeSet<usize> = BTreeSet::new();
        let mut out = BTreeMap::new();
        for gid in gids {
            let next: Vec<Option<Vertex>> = (0..self.n)
                .map(|r| match self.group_of[r] {
                    Some(x) if x == gid => None,
                    _ if decided.contains_key(&r) => Some(decided[&r]),
                    Some(_) => Some(self.claim[r]),
                    None if phi.contains(&r) => Some(self.intended(r)),
                    None => Some(self.claim[r]),
                })
                .collect();
            let can_recruit: Vec<bool> = (0..self.n).map(|r| self.recruitable(r, phi, &taken)).collect();
            let recruitable = |r: usize| can_recruit[r];
            let view = StepView { positions: &self.claim, next: &next, recruitable: &recruitable };
            let mut group = self.groups.remove(&gid).unwrap();
            let decision = group.decide(&self.ctx, &view);
            self.groups.insert(gid, group);
            let decision = match decision {
                Ok(d) => d,
                Err(PushPullError::InfeasibleGroup { group }) => return Err(group),
                Err(PushPullError::EmptySnapshot { .. }) => unreachable!("decide does not inspect snapshots"),
            };
            let blockers: BTreeSet<GroupId> =
                decision.blocked_by.iter().filter_map(|&o| self.group_of[o]).filter(|&x| x != gid).collect();
            if !blockers.is_empty() {
                let mut all = blockers;
                all.insert(gid);
                self.merge_into(&all, &[]);
                return Ok(None);
            }
            for &(r, v) in &decision.moves {
                decided.insert(r, v);
            }
            taken.extend(decision.recruits.iter().copied());
            out.insert(gid, decision);
        }
        Ok(Some(out))
    }

    fn release(&mut self, phi: &[usize]) -> Result<(), GroupId> {
        let start = Instant::now();
        let set: BTreeSet<usize> = phi.iter().copied().collect();
        self.log(EventKind::BarrierRelease, None, format!("robots={}", self.ids(phi)));
        let mut settled = None;
        for _ in 0..MAX_RESOLVE_ROUNDS {
            let Some(d) = self.decide_groups(&set)? else {
                continue;
            };
            if !self.resolve_conflict(phi, &d) {
                settled = Some(d);
                break;
            }
        }
        let decisions = match settled {
            Some(d) => d,
            None => self.settle_decisions(&set)?,
        };
        let mut next: BTreeMap<usize, Vertex> = phi.iter().map(|&r| (r, self.intended(r))).collect();
        for (&gid, d) in &decisions {
            let leader = self.groups[&gid].leader();
            let moved: Vec<usize> = d.moves.iter().filter(|&&(r, v)| v != self.claim[r]).map(|&(r, _)| r).collect();
            self.log(EventKind::PlanUpdate, leader, format!("group={gid} op={} moved={}", d.operator.name(), self.ids(&moved)));
            for &r in &d.recruits {
                let group = self.groups.get_mut(&gid).unwrap();
                group.recruit(r, &self.claim, &self.ledger);
                self.group_of[r] = Some(gid);
                self.ledger.end_local(r);
                self.plan[r].clear();
                self.log(EventKind::Recruit, Some(r), format!("group={gid}"));
            }
            for &(r, v) in &d.moves {
                next.insert(r, v);
            }
        }
        for r in phi {
            if self.group_of[*r].is_some() && !decisions.contains_key(&self.group_of[*r].unwrap()) {
                next.insert(*r, self.claim[*r]);
            }
        }
        self.guard(&mut next);
        self.trace.planning_time += start.elapsed();
        let oc_id = phi.iter().map(|&r| self.trace.robot_ids[r]).min().unwrap();
        self.depart(phi, &next, oc_id, true);
        let acted: BTreeSet<GroupId> = phi.iter().filter_map(|&r| self.group_of[r]).collect();
        for gid in acted {
            let group = self.groups.get_mut(&gid).unwrap();
            group.tick();
        }
        self.audit_groups(phi);
        Ok(())
    }

    /// Decisions without further conflict handling, once the round limit is
    /// reached; the guard keeps the step safe.
    fn settle_decisions(&mut self, phi: &BTreeSet<usize>) -> Result<BTreeMap<GroupId, StepDecision>, GroupId> {
        loop {
            if let Some(d) = self.decide_groups(phi)? {
                return Ok(d);
            }
        }
    }

    /// Senses the first predicted conflict and handles it by merging,
    /// converging or forming a group. Returns whether anything changed.
    fn resolve_conflict(&mut self, phi: &[usize], decisions: &BTreeMap<GroupId, StepDecision>) -> bool {
        let h = self.cfg.sensing.beta as usize;
        let mut traj: Vec<Vec<Vertex>> = (0..self.n).map(|r| self.trajectory(r)).collect();
        let mut owner: Vec<Option<GroupId>> = self.group_of.clone();
        for (&gid, d) in decisions {
            let group = &self.groups[&gid];
            for (r, t) in group.predict(&self.ctx, d, &self.claim, h) {
                traj[r] = t;
                owner[r] = Some(gid);
            }
        }
        let closure = Closure::new(phi.to_vec());
        // groups push parked robots out of the way themselves
        let phi_set: BTreeSet<usize> = phi.iter().copied().collect();
        let parked: Vec<bool> =
            (0..self.n).map(|r| owner[r].is_none() && self.recruitable(r, &phi_set, &BTreeSet::new())).collect();
        let sensed = sense_conflict_filtered(&traj, &closure, &self.cfg.sensing, |i, j| {
            (owner[i].is_some() && (owner[i] == owner[j] || parked[j])) || (owner[j].is_some() && parked[i])
        });
        let Some(ic) = sensed.ics.first() else {
            return false;
        };
        let ic = ic.clone();
        let detector = leader_for(&ic.robots, &self.waiting_since).unwrap();
        self.log(
            EventKind::Sense,
            Some(detector),
            format!("robots={} step={} cell={}", self.ids(&ic.robots), ic.first_step, self.xy(ic.location)),
        );
        let touching: BTreeSet<GroupId> = ic.robots.iter().filter_map(|&r| owner[r]).collect();
        let active: Vec<usize> = phi
            .iter()
            .copied()
            .filter(|&r| owner[r].is_none() && (self.has_work(r) || ic.robots.contains(&r)))
            .collect();
        if !touching.is_empty() {
            self.merge_into(&touching, &active);
            return true;
        }
        let eligible = |r: usize| owner[r].is_none() && closure.contains(r);
        let plan = converge(&ConvergeRequest {
            g: self.g(),
            costs: self.ctx.costs,
            ic: &ic.robots,
            oc: &closure,
            trajectories: &traj,
            ledger: &self.ledger,
            cfg: self.cfg.sensing,
            eligible: &eligible,
            conflict_cell: ic.location,
            max_participants: self.cfg.max_participants,
            node_budget: self.cfg.node_budget,
        });
        match plan {
            Some(plan) => {
                let mut members = Vec::new();
                for (p, &r) in plan.participants.iter().enumerate() {
                    let lg = plan.local_goal(p);
                    members.push(CertificateMember { robot: r, origin: self.claim[r], gamma_pre: self.ledger.gamma(r), target: lg });
                    self.ledger.snapshot(r);
                    self.ledger.begin_local(r, lg, plan.len());
                    let mut route: VecDeque<Vertex> = plan.moves[p].iter().copied().collect();
                    route.extend(self.ctx.costs.route(self.g(), r, lg));
                    self.plan[r] = route;
                }
                self.trace.certificates.push(Certificate {
                    time: self.now,
                    kind: CertificateKind::Convergence,
                    group: None,
                    members,
                    lhs: plan.certificate.lhs,
                    rhs: plan.certificate.rhs,
                });
                self.log(
                    EventKind::Converge,
                    Some(detector),
                    format!(
                        "robots={} len={} lhs={} rhs={}",
                        self.ids(&plan.participants),
                        plan.len(),
                        plan.certificate.lhs,
                        plan.certificate.rhs
                    ),
                );
                for &r in &plan.participants {
                    self.log(EventKind::PlanUpdate, Some(r), format!("local_goal={}", self.xy(self.ledger.local_goal(r).unwrap().vertex)));
                }
            }
            None => {
                let mut members: BTreeSet<usize> = active.into_iter().collect();
                members.extend(ic.robots.iter().copied());
                self.new_group(members.into_iter().collect());
            }
        }
        true
    }

    /// Forces robots to stay until the joint step is free of collisions with
    /// each other and with every claimed cell.
    fn guard(&mut self, next: &mut BTreeMap<usize, Vertex>) {
        loop {
            let mut target_of: HashMap<Vertex, Vec<usize>> = HashMap::new();
            for (&r, &v) in next.iter() {
                target_of.entry(v).or_default().push(r);
            }
            let mut stop: BTreeSet<usize> = BTreeSet::new();
            for (&r, &v) in next.iter() {
                if v == self.claim[r] {
                    continue;
                }
                let clash = target_of[&v].len() > 1;
                let held = self.claims.get(&v).is_some_and(|&o| !next.contains_key(&o));
                let swap = self.claims.get(&v).is_some_and(|&o| next.get(&o) == Some(&self.claim[r]));
                if clash || held || swap {
                    stop.insert(r);
                }
            }
            if stop.is_empty() {
                return;
            }
            for r in stop {
                next.insert(r, self.claim[r]);
                self.log(EventKind::Guard, Some(r), format!("held at {}", self.xy(self.claim[r])));
            }
        }
    }

    fn duration(&mut self, r: usize) -> u64 {
        match self.cfg.durations {
            StepDuration::Constant(d) => d,
            StepDuration::Uniform { min, max } => self.rngs[r].gen_range(min..=max),
        }
    }

    fn depart(&mut self, robots: &[usize], next: &BTreeMap<usize, Vertex>, oc_id: u32, barrier: bool) {
        let before: Vec<Vertex> = robots.iter().map(|&r| self.claim[r]).collect();
        let after: Vec<Vertex> = robots.iter().map(|&r| next[&r]).collect();
        self.audit_step(robots, &before, &after);
        if barrier {
            self.audit_barrier(robots);
        }
        self.trace.releases.push(Release { time: self.now, robots: robots.to_vec(), before, after, barrier });
        for &r in robots {
            if self.claims.get(&self.claim[r]) == Some(&r) {
                self.claims.remove(&self.claim[r]);
            }
        }
        for &r in robots {
            let to = next[&r];
            if self.group_of[r].is_none() && self.plan[r].front() == Some(&to) {
                self.plan[r].pop_front();
                if self.ledger.local_goal(r).is_some() {
                    self.q_pending[r] = true;
                }
            }
            if let Some(&o) = self.claims.get(&to) {
                self.trace.violations.push(Violation::CoOccupancy { time: self.now, cell: to, robots: vec![o, r] });
            }
            self.claims.insert(to, r);
            self.claim[r] = to;
            self.status[r] = Status::InFlight;
            self.tags[r] = (oc_id, self.group_of[r]);
            let d = self.duration(r);
            self.heap.push(Reverse((self.now + d, r)));
        }
    }

    /// A waiting robot outside any group steps alone while its closure is
    /// busy, if nothing it can see stands in its way.
    fn solo_releases(&mut self, oc: &[usize]) {
        let h = self.cfg.sensing.beta as usize;
        for &r in oc {
            if self.status[r] == Status::InFlight || self.group_of[r].is_some() || self.plan[r].is_empty() {
                continue;
            }
            let to = self.intended(r);
            if self.claims.get(&to).is_some_and(|&o| o != r) {
                continue;
            }
            let mine = self.trajectory(r);
            if oc.iter().any(|&o| o != r && pair_conflict(&mine, &self.trajectory(o), h).is_some()) {
                continue;
            }
            let id = self.trace.robot_ids[r];
            self.depart(&[r], &BTreeMap::from([(r, to)]), id, false);
        }
    }

    fn audit_step(&mut self, robots: &[usize], before: &[Vertex], after: &[Vertex]) {
        for a in 0..robots.len() {
            for b in a + 1..robots.len() {
                let vertex = after[a] == after[b];
                let swap = before[a] != after[a] && after[a] == before[b] && after[b] == before[a];
                if vertex || swap {
                    self.trace.violations.push(Violation::Conflict { time: self.now, robots: vec![robots[a], robots[b]] });
                }
            }
        }
    }

    /// A barrier must cover exactly one closure of the batch it was released
    /// in: connected inside, no link to anyone outside.
    fn audit_barrier(&mut self, robots: &[usize]) {
        let inside: BTreeSet<usize> = robots.iter().copied().collect();
        let linked = |a: usize, b: usize| {
            self.cfg.sensing.senses(self.g(), self.batch_claim[a], self.batch_claim[b])
                || (self.group_of[a].is_some() && self.group_of[a] == self.group_of[b])
        };
        let leaks = robots.iter().any(|&a| (0..self.n).any(|b| !inside.contains(&b) && linked(a, b)));
        let parts = components(robots.len(), |a, b| linked(robots[a], robots[b])).len();
        if leaks || parts != 1 {
            self.trace.violations.push(Violation::BarrierSpan { time: self.now, robots: robots.to_vec() });
        }
    }

    /// Counts group members left without a relay path to their leader.
    fn audit_groups(&mut self, phi: &[usize]) {
        let gids: BTreeSet<GroupId> = phi.iter().filter_map(|&r| self.group_of[r]).collect();
        for gid in gids {
            let group = &self.groups[&gid];
            let Some(leader) = group.leader() else { continue };
            let parts = components(self.n, |a, b| self.cfg.sensing.senses(self.g(), self.claim[a], self.claim[b]));
            let home = parts.iter().find(|p| p.contains(&leader)).unwrap();
            if group.members().iter().any(|m| !home.contains(m)) {
                self.trace.connectivity_breaks += 1;
            }
        }
    }
}
