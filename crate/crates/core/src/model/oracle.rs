use std::collections::{HashMap, VecDeque};

use super::{ModelError, PlanRestriction};
use crate::world::{Scenario, Vertex};

pub const DEFAULT_STATE_BUDGET: u64 = 10_000_000;
pub const STATE_BUDGET_ENV: &str = "DISCOF_STATE_BUDGET";

/// State cap for [`oracle_solve`], read from `DISCOF_STATE_BUDGET` when set.
pub fn state_budget_from_env() -> u64 {
    std::env::var(STATE_BUDGET_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_STATE_BUDGET)
}

/// A synchronised joint plan: `steps[k][i]` is robot `i` at step `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointPlan {
    pub steps: Vec<Vec<Vertex>>,
}

impl JointPlan {
    pub fn makespan(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    /// Path of robot `i`, truncated after its last move.
    pub fn robot_path(&self, i: usize) -> Vec<Vertex> {
        let mut path: Vec<Vertex> = self.steps.iter().map(|row| row[i]).collect();
        while path.len() > 1 && path[path.len() - 1] == path[path.len() - 2] {
            path.pop();
        }
        path
    }
}

/// Breadth-first search over the composed system for a minimal-makespan
/// joint plan satisfying every restriction.
///
/// Returns `Ok(None)` when no plan of makespan at most `horizon` exists and
/// `Err(CapacityExceeded)` once more than `budget` joint states were stored.
pub fn oracle_solve(
    scenario: &Scenario,
    restrictions: &[Box<dyn PlanRestriction>],
    horizon: usize,
    budget: u64,
) -> Result<Option<JointPlan>, ModelError> {
    let g = scenario.graph();
    let free: Vec<Vertex> = g.vertices().collect();
    let mut slot = vec![u32::MAX; g.cell_count()];
    for (k, v) in free.iter().enumerate() {
        slot[v.index()] = k as u32;
    }
    let base = free.len() as u64;
    let n = scenario.robot_count();
    if (base as f64).powi(n as i32) >= u64::MAX as f64 {
        return Err(ModelError::CapacityExceeded { budget, explored: u64::MAX });
    }
    let encode = |q: &[Vertex]| q.iter().rev().fold(0u64, |acc, v| acc * base + slot[v.index()] as u64);
    let decode = |mut code: u64| -> Vec<Vertex> {
        (0..n)
            .map(|_| {
                let v = free[(code % base) as usize];
                code /= base;
                v
            })
            .collect()
    };

    let start = scenario.starts();
    let goal = scenario.goals();
    let goal_code = encode(&goal);
    let start_code = encode(&start);
    let initial_ok = restrictions.iter().all(|r| r.violations(None, &start).is_empty());
    if !initial_ok {
        return Ok(None);
    }

    let mut parent: HashMap<u64, u64> = HashMap::new();
    parent.insert(start_code, start_code);
    let mut frontier = VecDeque::from([(start_code, 0usize)]);
    let mut found = start_code == goal_code;
    let options: Vec<Vec<Vertex>> = free
        .iter()
        .map(|&v| std::iter::once(v).chain(g.neighbors(v).iter().copied()).collect())
        .collect();

    let mut next = vec![Vertex(0); n];
    while let Some((code, depth)) = frontier.pop_front() {
        if found || depth >= horizon {
            if found {
                break;
            }
            continue;
        }
        let q = decode(code);
        let choices: Vec<&[Vertex]> = q.iter().map(|v| options[slot[v.index()] as usize].as_slice()).collect();
        let mut idx = vec![0usize; n];
        'product: loop {
            for i in 0..n {
                next[i] = choices[i][idx[i]];
            }
            if restrictions.iter().all(|r| r.violations(Some(&q), &next).is_empty()) {
                let c = encode(&next);
                if let std::collections::hash_map::Entry::Vacant(e) = parent.entry(c) {
                    e.insert(code);
                    if parent.len() as u64 > budget {
                        return Err(ModelError::CapacityExceeded { budget, explored: parent.len() as u64 });
                    }
                    if c == goal_code {
                        found = true;
                        break 'product;
                    }
                    frontier.push_back((c, depth + 1));
                }
            }
            let mut i = 0;
            loop {
                if i == n {
                    break 'product;
                }
                idx[i] += 1;
                if idx[i] < choices[i].len() {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
        }
    }
    if !found {
        return Ok(None);
    }
    let mut codes = vec![goal_code];
    while *codes.last().unwrap() != start_code {
        codes.push(parent[codes.last().unwrap()]);
    }
    codes.reverse();
    Ok(Some(JointPlan { steps: codes.into_iter().map(decode).collect() }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{collision_restrictions, validate_trace};
    use crate::world::load_scenario;

    fn solve(text: &str, horizon: usize) -> Option<JointPlan> {
        let s = load_scenario(text).unwrap();
        let r = collision_restrictions();
        let plan = oracle_solve(&s, &r, horizon, DEFAULT_STATE_BUDGET).unwrap();
        if let Some(p) = &plan {
            assert!(validate_trace(s.graph(), &p.steps, &r).unwrap().is_empty());
            assert_eq!(p.steps[0], s.starts());
            assert_eq!(p.steps.last().unwrap(), &s.goals());
        }
        plan
    }

    #[test]
    fn single_robot_takes_shortest_path() {
        let p = solve("grid 5 1\nrobot 0 0 0 4 0\n", 10).unwrap();
        assert_eq!(p.makespan(), 4);
        assert_eq!(p.robot_path(0), (0..5).map(Vertex).collect::<Vec<_>>());
    }

    #[test]
    fn corridor_swap_without_pocket_is_unsolvable() {
        assert!(solve("grid 3 1\nrobot 0 0 0 2 0\nrobot 1 2 0 0 0\n", 30).is_none());
    }

    #[test]
    fn corridor_swap_with_side_pocket() {
        // 4x2 corridor; only (1,1) is free in the lower row
        let text = "grid 4 2\nobstacle 0 1\nobstacle 2 1\nobstacle 3 1\nrobot 0 0 0 3 0\nrobot 1 3 0 0 0\n";
        let p = solve(text, 30).unwrap();
        // one robot ducks into the pocket: 3 moves each plus 2 for the detour
        assert_eq!(p.makespan(), 5);
        assert!(p.steps.iter().any(|row| row.contains(&Vertex(5))));
    }

    #[test]
    fn budget_overflow_is_a_capacity_error() {
        let s = load_scenario("grid 4 4\nrobot 0 0 0 3 3\nrobot 1 3 3 0 0\n").unwrap();
        let err = oracle_solve(&s, &collision_restrictions(), 20, 10).unwrap_err();
        assert!(matches!(err, ModelError::CapacityExceeded { budget: 10, .. }));
    }

    #[test]
    fn horizon_bounds_the_search() {
        assert!(solve("grid 5 1\nrobot 0 0 0 4 0\n", 3).is_none());
    }
}
