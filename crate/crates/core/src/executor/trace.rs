use std::fmt::{self, Write as _};
use std::time::Duration;

use crate::world::{Scenario, Vertex};

/// Position of one robot at one of its local steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceRow {
    pub robot: usize,
    pub step: u64,
    pub position: Vertex,
    pub sim_time: u64,
    /// Smallest robot id of the closure the step was executed in.
    pub oc_id: u32,
    pub group_id: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    StepComplete,
    Sense,
    BarrierRelease,
    PlanUpdate,
    Converge,
    LocalGoalReached,
    GroupForm,
    GroupMerge,
    Recruit,
    LeaderChange,
    GoalRemove,
    Decouple,
    Dissolve,
    Guard,
    Idle,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::StepComplete => "step_complete",
            EventKind::Sense => "sense",
            EventKind::BarrierRelease => "barrier_release",
            EventKind::PlanUpdate => "plan_update",
            EventKind::Converge => "converge",
            EventKind::LocalGoalReached => "local_goal",
            EventKind::GroupForm => "group_form",
            EventKind::GroupMerge => "group_merge",
            EventKind::Recruit => "recruit",
            EventKind::LeaderChange => "leader_change",
            EventKind::GoalRemove => "goal_remove",
            EventKind::Decouple => "decouple",
            EventKind::Dissolve => "dissolve",
            EventKind::Guard => "guard",
            EventKind::Idle => "idle",
        }
    }
}

/// One line of the event log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimEvent {
    pub time: u64,
    pub kind: EventKind,
    /// Robot index, absent for closure- or group-level events.
    pub robot: Option<usize>,
    pub detail: String,
}

/// Joint step executed by a set of robots released together.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Release {
    pub time: u64,
    pub robots: Vec<usize>,
    pub before: Vec<Vertex>,
    pub after: Vec<Vertex>,
    /// True when the release was a barrier over a whole closure.
    pub barrier: bool,
}

/// Raw data behind a progress inequality, so that it can be re-derived.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertificateMember {
    pub robot: usize,
    /// Position when the conflict was predicted or the group coupled.
    pub origin: Vertex,
    pub gamma_pre: i64,
    /// Local goal (convergence) or current position (decoupling).
    pub target: Vertex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertificateKind {
    Convergence,
    Decouple,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub time: u64,
    pub kind: CertificateKind,
    pub group: Option<u32>,
    pub members: Vec<CertificateMember>,
    pub lhs: i64,
    pub rhs: i64,
}

/// Completion of one robot's local plan.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalCompletion {
    pub time: u64,
    pub robot: usize,
    pub position: Vertex,
    pub local_goal: Vertex,
    pub gamma: i64,
}

/// A safety finding of the built-in audit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// Two robots of one release collide or swap.
    Conflict { time: u64, robots: Vec<usize> },
    /// A cell claimed twice on the continuous timeline.
    CoOccupancy { time: u64, cell: Vertex, robots: Vec<usize> },
    /// A barrier spanning robots that were not one closure.
    BarrierSpan { time: u64, robots: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    BudgetExceeded { budget: u64 },
    Infeasible { group: u32 },
}

impl Outcome {
    pub fn is_completed(&self) -> bool {
        matches!(self, Outcome::Completed)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Completed => f.write_str("completed"),
            Outcome::BudgetExceeded { budget } => write!(f, "step budget of {budget} exceeded"),
            Outcome::Infeasible { group } => write!(f, "group {group} proved its subproblem infeasible"),
        }
    }
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct Trace {
    pub outcome: Outcome,
    pub robot_ids: Vec<u32>,
    pub width: u32,
    /// Sorted by (robot, step).
    pub rows: Vec<TraceRow>,
    pub events: Vec<SimEvent>,
    pub releases: Vec<Release>,
    pub certificates: Vec<Certificate>,
    pub completions: Vec<LocalCompletion>,
    pub violations: Vec<Violation>,
    /// Group steps after which a member had no relay path to the leader.
    pub connectivity_breaks: u64,
    /// Local step at which each robot last arrived at its goal.
    pub arrival_steps: Vec<u64>,
    pub planning_time: Duration,
}

impl Trace {
    /// Maximum over robots of the local step of final goal arrival.
    pub fn steps(&self) -> u64 {
        self.arrival_steps.iter().copied().max().unwrap_or(0)
    }

    pub fn sum_of_steps(&self) -> u64 {
        self.arrival_steps.iter().sum()
    }

    pub fn robot_count(&self) -> usize {
        self.robot_ids.len()
    }

    /// Positions of one robot indexed by its local step.
    pub fn positions_of(&self, robot: usize) -> Vec<Vertex> {
        self.rows.iter().filter(|r| r.robot == robot).map(|r| r.position).collect()
    }

    pub fn final_positions(&self) -> Vec<Vertex> {
        (0..self.robot_count()).map(|r| *self.positions_of(r).last().unwrap()).collect()
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// `robot_id,step,x,y,sim_time,oc_id,group_id`, one row per robot step.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("robot_id,step,x,y,sim_time,oc_id,group_id\n");
        for r in &self.rows {
            let (x, y) = (r.position.0 % self.width, r.position.0 / self.width);
            let group = r.group_id.map_or(-1, |g| g as i64);
            writeln!(out, "{},{},{x},{y},{},{},{group}", self.robot_ids[r.robot], r.step, r.sim_time, r.oc_id).unwrap();
        }
        out
    }

    /// `time kind robot detail`, one event per line; `-` marks events without
    /// a robot.
    pub fn event_log(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let robot = e.robot.map_or("-".to_string(), |r| self.robot_ids[r].to_string());
            writeln!(out, "{} {} {} {}", e.time, e.kind.name(), robot, e.detail).unwrap();
        }
        out
    }

    /// Consistency with the scenario it was produced from.
    pub fn matches(&self, scenario: &Scenario) -> bool {
        self.robot_count() == scenario.robot_count()
            && self.robot_ids.iter().zip(scenario.robots()).all(|(a, r)| *a == r.id)
            && self.width == scenario.graph().width()
    }
}
