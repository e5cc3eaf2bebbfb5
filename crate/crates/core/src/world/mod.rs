//! Grid workspace: cells, 4-connected adjacency, shortest paths and scenarios.

mod costs;
mod scenario;

pub use costs::GoalDistances;
pub use scenario::{load_scenario, save_scenario, RobotSpec, Scenario, ScenarioError};

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

/// A grid cell, addressed by `y * width + x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Vertex(pub u32);

impl Vertex {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorldError {
    #[error("grid must have positive width and height, got {width}x{height}")]
    EmptyGrid { width: u32, height: u32 },
    #[error("obstacle ({x}, {y}) lies outside the {width}x{height} grid")]
    ObstacleOutOfBounds { x: u32, y: u32, width: u32, height: u32 },
    #[error("cell ({x}, {y}) is not a free vertex")]
    NotFree { x: u32, y: u32 },
}

/// Undirected 4-connected grid with an obstacle mask.
///
/// Adjacency lists are sorted by cell id, which fixes the successor order of
/// every search over the graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorldGraph {
    width: u32,
    height: u32,
    blocked: Vec<bool>,
    adjacency: Vec<Vec<Vertex>>,
    free_count: usize,
}

/// Graph distances from one source; `u32::MAX` marks unreachable cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceMap {
    source: Vertex,
    dist: Vec<u32>,
}

impl DistanceMap {
    pub const UNREACHABLE: u32 = u32::MAX;

    pub fn source(&self) -> Vertex {
        self.source
    }

    pub fn get(&self, v: Vertex) -> Option<u32> {
        match self.dist[v.index()] {
            Self::UNREACHABLE => None,
            d => Some(d),
        }
    }

    /// Distance to the source; panics on unreachable cells, which callers
    /// rule out by scenario validation.
    pub fn at(&self, v: Vertex) -> u32 {
        let d = self.dist[v.index()];
        assert!(d != Self::UNREACHABLE, "{v} cannot reach {}", self.source);
        d
    }
}

/// An ordered vertex list where consecutive vertices are adjacent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path {
    vertices: Vec<Vertex>,
}

impl Path {
    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn cost(&self) -> u32 {
        (self.vertices.len() - 1) as u32
    }

    pub fn start(&self) -> Vertex {
        self.vertices[0]
    }

    pub fn end(&self) -> Vertex {
        *self.vertices.last().expect("paths are never empty")
    }

    pub fn into_vertices(self) -> Vec<Vertex> {
        self.vertices
    }
}

impl WorldGraph {
    pub fn build_grid(width: u32, height: u32, obstacles: &[(u32, u32)]) -> Result<Self, WorldError> {
        if width == 0 || height == 0 {
            return Err(WorldError::EmptyGrid { width, height });
        }
        let cells = (width * height) as usize;
        let mut blocked = vec![false; cells];
        for &(x, y) in obstacles {
            if x >= width || y >= height {
                return Err(WorldError::ObstacleOutOfBounds { x, y, width, height });
            }
            blocked[(y * width + x) as usize] = true;
        }
        let mut adjacency = vec![Vec::new(); cells];
        for y in 0..height {
            for x in 0..width {
                let id = y * width + x;
                if blocked[id as usize] {
                    continue;
                }
                // ascending cell id: up, left, right, down
                let mut candidates = Vec::with_capacity(4);
                if y > 0 {
                    candidates.push(id - width);
                }
                if x > 0 {
                    candidates.push(id - 1);
                }
                if x + 1 < width {
                    candidates.push(id + 1);
                }
                if y + 1 < height {
                    candidates.push(id + width);
                }
                adjacency[id as usize] = candidates
                    .into_iter()
                    .filter(|&n| !blocked[n as usize])
                    .map(Vertex)
                    .collect();
            }
        }
        let free_count = blocked.iter().filter(|b| !**b).count();
        Ok(Self { width, height, blocked, adjacency, free_count })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn cell_count(&self) -> usize {
        self.blocked.len()
    }

    /// Number of free vertices.
    pub fn vertex_count(&self) -> usize {
        self.free_count
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Cell at `(x, y)`, or `None` when out of bounds. The cell may be blocked.
    pub fn cell(&self, x: u32, y: u32) -> Option<Vertex> {
        (x < self.width && y < self.height).then(|| Vertex(y * self.width + x))
    }

    /// Free vertex at `(x, y)`.
    pub fn vertex(&self, x: u32, y: u32) -> Result<Vertex, WorldError> {
        match self.cell(x, y) {
            Some(v) if self.is_free(v) => Ok(v),
            _ => Err(WorldError::NotFree { x, y }),
        }
    }

    pub fn coords(&self, v: Vertex) -> (u32, u32) {
        (v.0 % self.width, v.0 / self.width)
    }

    pub fn contains(&self, v: Vertex) -> bool {
        v.index() < self.blocked.len()
    }

    pub fn is_free(&self, v: Vertex) -> bool {
        self.contains(v) && !self.blocked[v.index()]
    }

    pub fn is_obstacle(&self, v: Vertex) -> bool {
        self.contains(v) && self.blocked[v.index()]
    }

    pub fn neighbors(&self, v: Vertex) -> &[Vertex] {
        &self.adjacency[v.index()]
    }

    pub fn degree(&self, v: Vertex) -> usize {
        self.adjacency[v.index()].len()
    }

    pub fn adjacent(&self, a: Vertex, b: Vertex) -> bool {
        self.adjacency[a.index()].binary_search(&b).is_ok()
    }

    /// `a == b` or the two are adjacent: a legal single-step transition.
    pub fn can_step(&self, a: Vertex, b: Vertex) -> bool {
        a == b || self.adjacent(a, b)
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.blocked.len() as u32).map(Vertex).filter(move |v| !self.blocked[v.index()])
    }

    pub fn obstacles(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.blocked.len() as u32).map(Vertex).filter(move |v| self.blocked[v.index()])
    }

    pub fn chebyshev(&self, a: Vertex, b: Vertex) -> u32 {
        let (ax, ay) = self.coords(a);
        let (bx, by) = self.coords(b);
        ax.abs_diff(bx).max(ay.abs_diff(by))
    }

    pub fn manhattan(&self, a: Vertex, b: Vertex) -> u32 {
        let (ax, ay) = self.coords(a);
        let (bx, by) = self.coords(b);
        ax.abs_diff(bx) + ay.abs_diff(by)
    }

    /// Breadth-first distances from `source` to every cell.
    pub fn distances_from(&self, source: Vertex) -> DistanceMap {
        let mut dist = vec![DistanceMap::UNREACHABLE; self.blocked.len()];
        if self.is_free(source) {
            dist[source.index()] = 0;
            let mut queue = VecDeque::from([source]);
            while let Some(v) = queue.pop_front() {
                let next = dist[v.index()] + 1;
                for &n in self.neighbors(v) {
                    if dist[n.index()] == DistanceMap::UNREACHABLE {
                        dist[n.index()] = next;
                        queue.push_back(n);
                    }
                }
            }
        }
        DistanceMap { source, dist }
    }

    /// Minimal-length path from `u` to `v`, `None` when unreachable.
    ///
    /// Built by descending the distance field of `v`, always taking the
    /// lowest-id neighbour that is one step closer.
    pub fn shortest_path(&self, u: Vertex, v: Vertex) -> Result<Option<Path>, WorldError> {
        for w in [u, v] {
            if !self.is_free(w) {
                let (x, y) = if self.contains(w) { self.coords(w) } else { (u32::MAX, u32::MAX) };
                return Err(WorldError::NotFree { x, y });
            }
        }
        let field = self.distances_from(v);
        Ok(self.descend(&field, u).map(|vertices| Path { vertices }))
    }

    /// Path from `from` to the source of `field`, following the same
    /// tie-breaking as [`WorldGraph::shortest_path`].
    pub fn descend(&self, field: &DistanceMap, from: Vertex) -> Option<Vec<Vertex>> {
        let mut d = field.get(from)?;
        let mut at = from;
        let mut vertices = Vec::with_capacity(d as usize + 1);
        vertices.push(at);
        while d > 0 {
            at = self
                .neighbors(at)
                .iter()
                .copied()
                .find(|&n| field.dist[n.index()] == d - 1)
                .expect("distance field is consistent");
            vertices.push(at);
            d -= 1;
        }
        Some(vertices)
    }

    /// Next vertex on the descent from `from` towards the source of `field`.
    pub fn descend_step(&self, field: &DistanceMap, from: Vertex) -> Option<Vertex> {
        let d = field.get(from)?;
        if d == 0 {
            return None;
        }
        self.neighbors(from).iter().copied().find(|&n| field.dist[n.index()] == d - 1)
    }

    /// Connected-component label per cell (`u32::MAX` for obstacles).
    pub fn components(&self) -> Vec<u32> {
        let mut label = vec![u32::MAX; self.blocked.len()];
        let mut next = 0;
        for v in self.vertices() {
            if label[v.index()] != u32::MAX {
                continue;
            }
            label[v.index()] = next;
            let mut queue = VecDeque::from([v]);
            while let Some(w) = queue.pop_front() {
                for &n in self.neighbors(w) {
                    if label[n.index()] == u32::MAX {
                        label[n.index()] = next;
                        queue.push_back(n);
                    }
                }
            }
            next += 1;
        }
        label
    }
}
