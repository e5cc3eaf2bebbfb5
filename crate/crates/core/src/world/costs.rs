use super::{DistanceMap, Scenario, Vertex, WorldGraph};

/// Distance field to each robot's goal, so that the cost of any cell for
/// any robot is a table lookup.
#[derive(Clone, Debug)]
pub struct GoalDistances {
    goals: Vec<Vertex>,
    maps: Vec<DistanceMap>,
}

impl GoalDistances {
    pub fn new(g: &WorldGraph, goals: &[Vertex]) -> Self {
        Self { goals: goals.to_vec(), maps: goals.iter().map(|&v| g.distances_from(v)).collect() }
    }

    pub fn for_scenario(s: &Scenario) -> Self {
        Self::new(s.graph(), &s.goals())
    }

    pub fn goal(&self, robot: usize) -> Vertex {
        self.goals[robot]
    }

    pub fn map(&self, robot: usize) -> &DistanceMap {
        &self.maps[robot]
    }

    /// Shortest-path length from `v` to the goal of `robot`.
    pub fn cost(&self, robot: usize, v: Vertex) -> u32 {
        self.maps[robot].at(v)
    }

    /// Next vertex on the robot's canonical shortest path from `v`.
    pub fn next_step(&self, g: &WorldGraph, robot: usize, v: Vertex) -> Option<Vertex> {
        g.descend_step(&self.maps[robot], v)
    }

    /// Canonical shortest path from `v` to the robot's goal, excluding `v`.
    pub fn route(&self, g: &WorldGraph, robot: usize, v: Vertex) -> Vec<Vertex> {
        let mut path = g.descend(&self.maps[robot], v).expect("goal reachable");
        path.remove(0);
        path
    }
}
