use std::collections::{BTreeMap, BTreeSet};

use super::ModelError;
use crate::world::{Vertex, WorldGraph};

/// Atomic proposition: "the robot is at this vertex".
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AtVertex(pub Vertex);

/// Finite transition system over graph vertices.
///
/// Every state carries a self-loop, since a robot may always remain where it
/// is for one step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fts {
    states: Vec<Vertex>,
    initial: Vertex,
    transitions: BTreeMap<Vertex, Vec<Vertex>>,
    goals: BTreeSet<Vertex>,
}

impl Fts {
    pub fn new(
        states: impl IntoIterator<Item = Vertex>,
        initial: Vertex,
        transitions: BTreeMap<Vertex, Vec<Vertex>>,
        goals: impl IntoIterator<Item = Vertex>,
    ) -> Result<Self, ModelError> {
        let states: BTreeSet<Vertex> = states.into_iter().collect();
        let goals: BTreeSet<Vertex> = goals.into_iter().collect();
        if !states.contains(&initial) {
            return Err(ModelError::InvalidFts(format!("initial state {initial} is not a state")));
        }
        if let Some(g) = goals.iter().find(|g| !states.contains(g)) {
            return Err(ModelError::InvalidFts(format!("goal {g} is not a state")));
        }
        let mut normalised = BTreeMap::new();
        for &q in &states {
            let mut succ: BTreeSet<Vertex> = transitions.get(&q).into_iter().flatten().copied().collect();
            if !succ.contains(&q) {
                return Err(ModelError::InvalidFts(format!("state {q} lacks a self-loop")));
            }
            if let Some(bad) = succ.iter().find(|s| !states.contains(s)) {
                return Err(ModelError::InvalidFts(format!("transition {q} -> {bad} leaves the state set")));
            }
            succ.insert(q);
            normalised.insert(q, succ.into_iter().collect());
        }
        if let Some(q) = transitions.keys().find(|q| !states.contains(q)) {
            return Err(ModelError::InvalidFts(format!("transition source {q} is not a state")));
        }
        Ok(Self { states: states.into_iter().collect(), initial, transitions: normalised, goals })
    }

    /// The motion model of one robot on `g`: all free vertices, adjacency
    /// plus self-loops, single goal.
    pub fn for_robot(g: &WorldGraph, start: Vertex, goal: Vertex) -> Result<Self, ModelError> {
        let transitions = g
            .vertices()
            .map(|v| {
                let mut succ: Vec<Vertex> = g.neighbors(v).to_vec();
                succ.push(v);
                succ.sort();
                (v, succ)
            })
            .collect();
        Self::new(g.vertices(), start, transitions, [goal])
    }

    pub fn states(&self) -> &[Vertex] {
        &self.states
    }

    pub fn initial(&self) -> Vertex {
        self.initial
    }

    pub fn goals(&self) -> &BTreeSet<Vertex> {
        &self.goals
    }

    pub fn successors(&self, q: Vertex) -> &[Vertex] {
        self.transitions.get(&q).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn has_transition(&self, from: Vertex, to: Vertex) -> bool {
        self.successors(from).binary_search(&to).is_ok()
    }

    pub fn label(&self, q: Vertex) -> BTreeSet<AtVertex> {
        if self.states.binary_search(&q).is_ok() {
            BTreeSet::from([AtVertex(q)])
        } else {
            BTreeSet::new()
        }
    }

    pub fn transition_count(&self) -> usize {
        self.transitions.values().map(Vec::len).sum()
    }
}

/// Synchronous composition of component systems.
///
/// States are tuples of component states and are expanded lazily; a joint
/// transition exists iff every component takes one of its own transitions.
/// With collision avoidance enabled, composed states with two equal
/// components and transitions exchanging two components are removed.
#[derive(Clone, Debug)]
pub struct JointFts {
    components: Vec<Fts>,
    avoid_collisions: bool,
}

pub fn compose(systems: Vec<Fts>) -> Result<JointFts, ModelError> {
    if systems.is_empty() {
        return Err(ModelError::EmptyComposition);
    }
    Ok(JointFts { components: systems, avoid_collisions: false })
}

impl JointFts {
    pub fn with_collision_avoidance(mut self) -> Self {
        self.avoid_collisions = true;
        self
    }

    pub fn components(&self) -> &[Fts] {
        &self.components
    }

    /// Cardinality of the full product state space.
    pub fn state_count(&self) -> u128 {
        self.components.iter().map(|c| c.states().len() as u128).product()
    }

    pub fn initial(&self) -> Vec<Vertex> {
        self.components.iter().map(Fts::initial).collect()
    }

    pub fn is_state(&self, q: &[Vertex]) -> bool {
        q.len() == self.components.len()
            && self.components.iter().zip(q).all(|(c, v)| c.states().binary_search(v).is_ok())
            && (!self.avoid_collisions || all_distinct(q))
    }

    pub fn is_goal(&self, q: &[Vertex]) -> bool {
        self.components.iter().zip(q).all(|(c, v)| c.goals().contains(v))
    }

    pub fn label(&self, q: &[Vertex]) -> Vec<BTreeSet<AtVertex>> {
        self.components.iter().zip(q).map(|(c, &v)| c.label(v)).collect()
    }

    pub fn has_transition(&self, q: &[Vertex], next: &[Vertex]) -> bool {
        if !self.is_state(q) || !self.is_state(next) {
            return false;
        }
        if !self.components.iter().enumerate().all(|(i, c)| c.has_transition(q[i], next[i])) {
            return false;
        }
        if self.avoid_collisions {
            for i in 0..q.len() {
                for j in i + 1..q.len() {
                    if q[i] != next[i] && next[i] == q[j] && next[j] == q[i] {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// All successors of `q`, in lexicographic order of component choices.
    pub fn successors(&self, q: &[Vertex]) -> Vec<Vec<Vertex>> {
        let mut out = Vec::new();
        let mut current = Vec::with_capacity(q.len());
        self.expand(q, &mut current, &mut out);
        out
    }

    fn expand(&self, q: &[Vertex], current: &mut Vec<Vertex>, out: &mut Vec<Vec<Vertex>>) {
        let i = current.len();
        if i == q.len() {
            if self.has_transition(q, current) {
                out.push(current.clone());
            }
            return;
        }
        for &s in self.components[i].successors(q[i]) {
            current.push(s);
            self.expand(q, current, out);
            current.pop();
        }
    }

    /// Every composed state, enumerated explicitly. Only sensible for tiny
    /// products.
    pub fn states(&self) -> Vec<Vec<Vertex>> {
        let mut all = vec![Vec::new()];
        for c in &self.components {
            all = all
                .into_iter()
                .flat_map(|prefix| {
                    c.states().iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        all.retain(|q| self.is_state(q));
        all
    }
}

fn all_distinct(q: &[Vertex]) -> bool {
    let set: BTreeSet<_> = q.iter().collect();
    set.len() == q.len()
}
