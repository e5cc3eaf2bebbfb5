use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use super::{Vertex, WorldError, WorldGraph};

/// One robot's task: start cell and goal cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RobotSpec {
    pub id: u32,
    pub start: Vertex,
    pub goal: Vertex,
}

/// A workspace plus a set of robots, each with a start and a goal.
///
/// Robots are kept sorted by id; everywhere else in the crate a robot is
/// referred to by its index into [`Scenario::robots`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    graph: WorldGraph,
    robots: Vec<RobotSpec>,
    seed: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("scenario has no robots")]
    NoRobots,
    #[error("robot id {robot} is used more than once")]
    DuplicateId { robot: u32 },
    #[error("robot {robot}: cell ({x}, {y}) lies outside the grid")]
    OutOfBounds { robot: u32, x: u32, y: u32 },
    #[error("robot {robot} starts on an obstacle")]
    StartOnObstacle { robot: u32 },
    #[error("robot {robot} has its goal on an obstacle")]
    GoalOnObstacle { robot: u32 },
    #[error("robot {robot} shares its start cell with robot {other}")]
    DuplicateStart { robot: u32, other: u32 },
    #[error("robot {robot} shares its goal cell with robot {other}")]
    DuplicateGoal { robot: u32, other: u32 },
    #[error("robot {robot} cannot reach its goal")]
    GoalUnreachable { robot: u32 },
}

impl Scenario {
    pub fn new(graph: WorldGraph, mut robots: Vec<RobotSpec>, seed: u64) -> Result<Self, ScenarioError> {
        if robots.is_empty() {
            return Err(ScenarioError::NoRobots);
        }
        robots.sort_by_key(|r| r.id);
        for pair in robots.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(ScenarioError::DuplicateId { robot: pair[0].id });
            }
        }
        let mut starts: BTreeMap<Vertex, u32> = BTreeMap::new();
        let mut goals: BTreeMap<Vertex, u32> = BTreeMap::new();
        let components = graph.components();
        for r in &robots {
            for v in [r.start, r.goal] {
                if !graph.contains(v) {
                    return Err(ScenarioError::OutOfBounds { robot: r.id, x: u32::MAX, y: u32::MAX });
                }
            }
            if !graph.is_free(r.start) {
                return Err(ScenarioError::StartOnObstacle { robot: r.id });
            }
            if !graph.is_free(r.goal) {
                return Err(ScenarioError::GoalOnObstacle { robot: r.id });
            }
            if let Some(&other) = starts.get(&r.start) {
                return Err(ScenarioError::DuplicateStart { robot: r.id, other });
            }
            if let Some(&other) = goals.get(&r.goal) {
                return Err(ScenarioError::DuplicateGoal { robot: r.id, other });
            }
            if components[r.start.index()] != components[r.goal.index()] {
                return Err(ScenarioError::GoalUnreachable { robot: r.id });
            }
            starts.insert(r.start, r.id);
            goals.insert(r.goal, r.id);
        }
        Ok(Self { graph, robots, seed })
    }

    pub fn graph(&self) -> &WorldGraph {
        &self.graph
    }

    pub fn robots(&self) -> &[RobotSpec] {
        &self.robots
    }

    pub fn robot_count(&self) -> usize {
        self.robots.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn starts(&self) -> Vec<Vertex> {
        self.robots.iter().map(|r| r.start).collect()
    }

    pub fn goals(&self) -> Vec<Vertex> {
        self.robots.iter().map(|r| r.goal).collect()
    }

    /// Index of the robot with external id `id`.
    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.robots.binary_search_by_key(&id, |r| r.id).ok()
    }
}

/// Serialises a scenario to the line-oriented text format.
///
/// ```text
/// grid W H
/// seed S
/// obstacle X Y
/// robot ID SX SY GX GY
/// ```
pub fn save_scenario(s: &Scenario) -> String {
    let g = s.graph();
    let mut out = String::new();
    writeln!(out, "grid {} {}", g.width(), g.height()).unwrap();
    writeln!(out, "seed {}", s.seed()).unwrap();
    for v in g.obstacles() {
        let (x, y) = g.coords(v);
        writeln!(out, "obstacle {x} {y}").unwrap();
    }
    for r in s.robots() {
        let (sx, sy) = g.coords(r.start);
        let (gx, gy) = g.coords(r.goal);
        writeln!(out, "robot {} {sx} {sy} {gx} {gy}", r.id).unwrap();
    }
    out
}

/// Parses the text format written by [`save_scenario`]. `#` starts a comment.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut dims: Option<(u32, u32)> = None;
    let mut seed = 0u64;
    let mut obstacles = Vec::new();
    let mut robots: Vec<(u32, [u32; 4])> = Vec::new();
    let mut seen_ids = BTreeSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut words = line.split_whitespace();
        let keyword = words.next().unwrap();
        let args: Vec<&str> = words.collect();
        let parse_err = |message: String| ScenarioError::Parse { line: line_no, message };
        let numbers = |expected: usize| -> Result<Vec<u64>, ScenarioError> {
            if args.len() != expected {
                return Err(parse_err(format!("`{keyword}` takes {expected} arguments, found {}", args.len())));
            }
            args.iter()
                .map(|a| a.parse::<u64>().map_err(|_| parse_err(format!("`{a}` is not a non-negative integer"))))
                .collect()
        };
        let small = |n: u64| -> Result<u32, ScenarioError> {
            u32::try_from(n).map_err(|_| parse_err(format!("{n} is out of range")))
        };
        match keyword {
            "grid" => {
                if dims.is_some() {
                    return Err(parse_err("duplicate `grid` header".into()));
                }
                let n = numbers(2)?;
                dims = Some((small(n[0])?, small(n[1])?));
            }
            _ if dims.is_none() => {
                return Err(parse_err("`grid W H` must be the first directive".into()));
            }
            "seed" => seed = numbers(1)?[0],
            "obstacle" => {
                let n = numbers(2)?;
                obstacles.push((small(n[0])?, small(n[1])?));
            }
            "robot" => {
                let n = numbers(5)?;
                let id = small(n[0])?;
                if !seen_ids.insert(id) {
                    return Err(ScenarioError::DuplicateId { robot: id });
                }
                robots.push((id, [small(n[1])?, small(n[2])?, small(n[3])?, small(n[4])?]));
            }
            other => return Err(parse_err(format!("unknown directive `{other}`"))),
        }
    }

    let (width, height) = dims.ok_or(ScenarioError::Parse { line: 0, message: "missing `grid W H` header".into() })?;
    let graph = WorldGraph::build_grid(width, height, &obstacles)?;
    let mut specs = Vec::with_capacity(robots.len());
    for (id, [sx, sy, gx, gy]) in robots {
        let start = graph.cell(sx, sy).ok_or(ScenarioError::OutOfBounds { robot: id, x: sx, y: sy })?;
        let goal = graph.cell(gx, gy).ok_or(ScenarioError::OutOfBounds { robot: id, x: gx, y: gy })?;
        specs.push(RobotSpec { id, start, goal });
    }
    Scenario::new(graph, specs, seed)
}
