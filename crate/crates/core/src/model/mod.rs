//! Transition systems, plan restrictions, trace validation and the
//! brute-force joint planner used to check small instances.

mod fts;
mod oracle;
mod restriction;

use thiserror::Error;

pub use fts::{compose, AtVertex, Fts, JointFts};
pub use oracle::{oracle_solve, state_budget_from_env, JointPlan, DEFAULT_STATE_BUDGET, STATE_BUDGET_ENV};
pub use restriction::{
    collision_restrictions, minimal_conflict_relations, validate_trace, ConflictKind, ConflictReport,
    PlanRestriction, SwapCollision, VertexCollision,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid transition system: {0}")]
    InvalidFts(String),
    #[error("cannot compose an empty list of transition systems")]
    EmptyComposition,
    #[error("malformed trace at step {step}: {reason}")]
    MalformedTrace { step: usize, reason: String },
    #[error("joint state budget of {budget} exceeded ({explored} states)")]
    CapacityExceeded { budget: u64, explored: u64 },
}
