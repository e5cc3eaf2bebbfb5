//! Instance generation, batch experiments and reporting.

mod render;
mod report;

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::coordination::SensingConfig;
use crate::executor::{self, ExecutorError, Mode, Outcome, RunConfig, Trace};
use crate::model::{collision_restrictions, validate_trace};
use crate::world::{RobotSpec, Scenario, ScenarioError, WorldGraph};

pub use render::{render_frames, render_svg, RenderError};
pub use report::{aggregate, instances_csv, ratios_csv, summary_csv, ModeSummary, RatioRow, Stats};

/// Resampling attempts per instance before giving up.
pub const MAX_ATTEMPTS: u32 = 1000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("obstacle rate {0} is outside [0, 1)")]
    BadRate(f64),
    #[error("{width}x{height} grid with {obstacles} obstacles leaves {free} free cells, fewer than 2 x {robots} robots")]
    TooCrowded { width: u32, height: u32, obstacles: u32, free: u32, robots: usize },
    #[error("no valid instance for seed {seed} ({width}x{height}, {robots} robots, rate {rate}) after {MAX_ATTEMPTS} attempts")]
    Exhausted { seed: u64, width: u32, height: u32, robots: usize, rate: f64 },
    #[error("safety validation failed for seed {seed} in mode {mode}: {detail}")]
    Unsafe { seed: u64, mode: &'static str, detail: String },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Executor(#[from] ExecutorError),
}

/// Random obstacles, starts and goals, resampled until every goal is
/// reachable and each component holding robots keeps at least two free
/// cells.
pub fn generate_instance(seed: u64, width: u32, height: u32, robots: usize, rate: f64) -> Result<Scenario, HarnessError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(HarnessError::BadRate(rate));
    }
    let cells = width * height;
    let obstacles = (rate * cells as f64).round() as u32;
    let free = cells.saturating_sub(obstacles);
    if (free as usize) < 2 * robots || robots == 0 {
        return Err(HarnessError::TooCrowded { width, height, obstacles, free, robots });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<(u32, u32)> = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).collect();
    for _ in 0..MAX_ATTEMPTS {
        let blocked: Vec<(u32, u32)> = all.choose_multiple(&mut rng, obstacles as usize).copied().collect();
        let Ok(g) = WorldGraph::build_grid(width, height, &blocked) else { continue };
        if let Some(specs) = place_robots(&g, robots, &mut rng) {
            return Ok(Scenario::new(g, specs, seed)?);
        }
    }
    Err(HarnessError::Exhausted { seed, width, height, robots, rate })
}

fn place_robots(g: &WorldGraph, robots: usize, rng: &mut ChaCha8Rng) -> Option<Vec<RobotSpec>> {
    let comp = g.components();
    let free: Vec<_> = g.vertices().collect();
    let starts: Vec<_> = free.choose_multiple(rng, robots).copied().collect();
    let mut by_comp: HashMap<u32, Vec<_>> = HashMap::new();
    for &v in &free {
        by_comp.entry(comp[v.index()]).or_default().push(v);
    }
    let mut used = BTreeSet::new();
    let mut specs = Vec::with_capacity(robots);
    for (i, &s) in starts.iter().enumerate() {
        let pool: Vec<_> = by_comp[&comp[s.index()]].iter().copied().filter(|v| !used.contains(v)).collect();
        if pool.is_empty() {
            return None;
        }
        let goal = pool[rng.gen_range(0..pool.len())];
        used.insert(goal);
        specs.push(RobotSpec { id: i as u32, start: s, goal });
    }
    let mut load: HashMap<u32, usize> = HashMap::new();
    for &s in &starts {
        *load.entry(comp[s.index()]).or_default() += 1;
    }
    load.iter().all(|(c, &k)| by_comp[c].len() >= k + 2).then_some(specs)
}

/// Everything wrong with a run that claims to be safe: collisions inside
/// each synchronized release, and cells claimed twice on the event
/// timeline. Empty when the run is safe.
pub fn check_safety(scenario: &Scenario, trace: &Trace) -> Vec<String> {
    let g = scenario.graph();
    let restrictions = collision_restrictions();
    let mut problems: Vec<String> = trace.violations.iter().map(|v| format!("{v:?}")).collect();
    for rel in &trace.releases {
        match validate_trace(g, &[rel.before.clone(), rel.after.clone()], &restrictions) {
            Ok(report) if report.is_empty() => {}
            Ok(report) => problems.push(format!("t={} conflicts {report:?}", rel.time)),
            Err(e) => problems.push(format!("t={} malformed step: {e}", rel.time)),
        }
    }
    // replay claims from the releases alone
    let mut holder: HashMap<_, usize> = scenario.starts().into_iter().enumerate().map(|(i, v)| (v, i)).collect();
    for rel in &trace.releases {
        for (k, &r) in rel.robots.iter().enumerate() {
            if holder.get(&rel.before[k]) == Some(&r) {
                holder.remove(&rel.before[k]);
            }
        }
        for (k, &r) in rel.robots.iter().enumerate() {
            if let Some(&o) = holder.get(&rel.after[k]) {
                problems.push(format!("t={} robots {o} and {r} both hold a cell", rel.time));
            }
            holder.insert(rel.after[k], r);
        }
    }
    for r in 0..trace.robot_count() {
        let path = trace.positions_of(r);
        if path.windows(2).any(|w| !g.can_step(w[0], w[1])) {
            problems.push(format!("robot {} jumps", trace.robot_ids[r]));
        }
    }
    problems
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub width: u32,
    pub height: u32,
    pub robots: usize,
    pub obstacle_rates: Vec<f64>,
    pub instances: usize,
    pub seed: u64,
    pub modes: Vec<Mode>,
    pub sensing: SensingConfig,
    pub seconds_per_move: f64,
    /// Template for each run; its mode and sensing fields are overwritten.
    pub run: RunConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            width: 20,
            height: 20,
            robots: 30,
            obstacle_rates: vec![0.05, 0.10, 0.15, 0.20],
            instances: 100,
            seed: 0,
            modes: vec![Mode::Discof, Mode::DiscofPlus],
            sensing: SensingConfig::default(),
            seconds_per_move: 5.0,
            run: RunConfig::default(),
        }
    }
}

/// Seed of instance `index` at rate number `rate_index`.
pub fn instance_seed(base: u64, rate_index: usize, index: usize) -> u64 {
    base.wrapping_add(rate_index as u64 * 1_000_000).wrapping_add(index as u64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceResult {
    pub rate: f64,
    pub seed: u64,
    pub mode: Mode,
    pub outcome: Outcome,
    pub comp_time: f64,
    pub steps: u64,
    pub sum_of_steps: u64,
    pub approx_run_time: f64,
    /// Wall-clock time of the whole run, including bookkeeping.
    pub wall_time: f64,
}

pub fn approx_run_time(comp_time: f64, seconds_per_move: f64, steps: u64) -> f64 {
    comp_time + seconds_per_move * steps as f64
}

/// Steps reported for a run: final goal arrival for completed runs, the
/// largest local step count otherwise.
pub fn run_steps(trace: &Trace) -> u64 {
    if trace.outcome.is_completed() {
        trace.steps()
    } else {
        trace.rows.iter().map(|r| r.step).max().unwrap_or(0)
    }
}

/// Runs one scenario in one mode and measures it.
pub fn measure(scenario: &Scenario, rate: f64, cfg: &RunConfig, seconds_per_move: f64) -> Result<(InstanceResult, Trace), HarnessError> {
    let started = Instant::now();
    let trace = executor::run(scenario, cfg)?;
    let wall_time = started.elapsed().as_secs_f64();
    let problems = check_safety(scenario, &trace);
    if !problems.is_empty() {
        return Err(HarnessError::Unsafe { seed: scenario.seed(), mode: cfg.mode.name(), detail: problems.join("; ") });
    }
    let comp_time = trace.planning_time.as_secs_f64();
    let steps = run_steps(&trace);
    let result = InstanceResult {
        rate,
        seed: scenario.seed(),
        mode: cfg.mode,
        outcome: trace.outcome.clone(),
        comp_time,
        steps,
        sum_of_steps: trace.sum_of_steps(),
        approx_run_time: approx_run_time(comp_time, seconds_per_move, steps),
        wall_time,
    };
    Ok((result, trace))
}

/// Generates every instance, runs it in every mode (in parallel), and
/// returns the per-run rows sorted by (rate, seed, mode).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<InstanceResult>, HarnessError> {
    let jobs: Vec<(f64, u64)> = cfg
        .obstacle_rates
        .iter()
        .enumerate()
        .flat_map(|(k, &rate)| (0..cfg.instances).map(move |i| (rate, instance_seed(cfg.seed, k, i))))
        .collect();
    let results: Result<Vec<Vec<InstanceResult>>, HarnessError> = jobs
        .par_iter()
        .map(|&(rate, seed)| {
            let scenario = generate_instance(seed, cfg.width, cfg.height, cfg.robots, rate)?;
            cfg.modes
                .iter()
                .map(|&mode| {
                    let run = RunConfig { mode, sensing: cfg.sensing, ..cfg.run.clone() };
                    measure(&scenario, rate, &run, cfg.seconds_per_move).map(|(r, _)| r)
                })
                .collect()
        })
        .collect();
    let mut rows: Vec<InstanceResult> = results?.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        a.rate.total_cmp(&b.rate).then(a.seed.cmp(&b.seed)).then(a.mode.name().cmp(b.mode.name()))
    });
    Ok(rows)
}
