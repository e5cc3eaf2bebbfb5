//! Event-driven execution of many robots with per-robot step durations.
//!
//! Robots that sense each other (directly or through a relay chain) form an
//! outer closure and advance in lock-step: the closure is released once all
//! of its members have finished their current step. Robots in different
//! closures run on independent clocks.

mod sim;
mod trace;

use thiserror::Error;

use crate::convergence::{DEFAULT_MAX_PARTICIPANTS, DEFAULT_NODE_BUDGET};
use crate::coordination::SensingConfig;
use crate::pushpull::PushPullLimits;
use crate::world::{GoalDistances, Scenario};

pub use trace::{
    Certificate, CertificateKind, CertificateMember, EventKind, LocalCompletion, Outcome, Release, SimEvent, Trace,
    TraceRow, Violation,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Coupling groups persist until every member reached its goal.
    Discof,
    /// Coupling groups dissolve as soon as they made joint progress.
    DiscofPlus,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Discof => "discof",
            Mode::DiscofPlus => "discof_plus",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "discof" => Ok(Mode::Discof),
            "discof_plus" | "discof+" => Ok(Mode::DiscofPlus),
            other => Err(format!("unknown mode `{other}` (expected discof or discof_plus)")),
        }
    }
}

/// How long one step takes, in simulated time units.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepDuration {
    /// Drawn uniformly from `min..=max` for every step of every robot.
    Uniform { min: u64, max: u64 },
    Constant(u64),
}

impl Default for StepDuration {
    fn default() -> Self {
        StepDuration::Uniform { min: 1, max: 5 }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub sensing: SensingConfig,
    pub mode: Mode,
    pub durations: StepDuration,
    /// Overrides the scenario's seed for the duration draws.
    pub seed: Option<u64>,
    /// Maximum local steps per robot; `None` uses [`default_step_budget`].
    pub step_budget: Option<u64>,
    /// Let a robot step on its own while its closure is busy, as long as
    /// its next cell is unclaimed and no conflict is predicted.
    pub sync_only_on_conflict: bool,
    pub limits: PushPullLimits,
    pub max_participants: usize,
    pub node_budget: usize,
}

impl RunConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            sensing: SensingConfig::default(),
            mode,
            durations: StepDuration::default(),
            seed: None,
            step_budget: None,
            sync_only_on_conflict: false,
            limits: PushPullLimits::default(),
            max_participants: DEFAULT_MAX_PARTICIPANTS,
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::new(Mode::DiscofPlus)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecutorError {
    #[error("sensing range {0} is too small, the executor needs at least 2")]
    RangeTooSmall(u32),
    #[error("robot {robot} cannot reach its goal")]
    GoalUnreachable { robot: u32 },
    #[error("step durations must be at least 1 (got {min}..={max})")]
    BadDuration { min: u64, max: u64 },
    #[error("step budget must be positive")]
    ZeroBudget,
}

/// 50 local steps per robot per unit of grid width plus height.
pub fn default_step_budget(scenario: &Scenario) -> u64 {
    let g = scenario.graph();
    50 * scenario.robot_count() as u64 * (g.width() + g.height()) as u64
}

/// Robot that leads a convergence attempt for an inner closure: the one
/// that has been waiting longest, lowest index on ties.
pub fn leader_for(ic: &[usize], waiting_since: &[u64]) -> Option<usize> {
    ic.iter().copied().min_by_key(|&r| (waiting_since[r], r))
}

/// Rejects configurations the executor cannot run safely.
pub fn preflight(scenario: &Scenario, cfg: &RunConfig) -> Result<(), ExecutorError> {
    if cfg.sensing.sensing_range < 2 {
        return Err(ExecutorError::RangeTooSmall(cfg.sensing.sensing_range));
    }
    match cfg.durations {
        StepDuration::Uniform { min, max } if min == 0 || max < min => {
            return Err(ExecutorError::BadDuration { min, max })
        }
        StepDuration::Constant(0) => return Err(ExecutorError::BadDuration { min: 0, max: 0 }),
        _ => {}
    }
    if cfg.step_budget == Some(0) {
        return Err(ExecutorError::ZeroBudget);
    }
    let costs = GoalDistances::for_scenario(scenario);
    for (i, r) in scenario.robots().iter().enumerate() {
        if costs.map(i).get(r.start).is_none() {
            return Err(ExecutorError::GoalUnreachable { robot: r.id });
        }
    }
    Ok(())
}

/// Runs the scenario to completion, budget exhaustion or proven
/// infeasibility.
pub fn run(scenario: &Scenario, cfg: &RunConfig) -> Result<Trace, ExecutorError> {
    preflight(scenario, cfg)?;
    Ok(sim::simulate(scenario, cfg))
}
