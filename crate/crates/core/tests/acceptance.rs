//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::{HashMap, VecDeque};
use std::process::ExitCode;
use std::time::Instant;

use discof::convergence::{update_contribution, ContributionLedger};
use discof::executor::{self, CertificateKind, Mode, Outcome, RunConfig, StepDuration, Trace};
use discof::harness::{self, aggregate, generate_instance, instance_seed, ExperimentConfig, InstanceResult};
use discof::model::{collision_restrictions, oracle_solve, validate_trace, DEFAULT_STATE_BUDGET};
use discof::world::{GoalDistances, RobotSpec, Scenario, Vertex, WorldGraph};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const RATES: [f64; 4] = [0.05, 0.10, 0.15, 0.20];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// One run kept in full, for checks that need more than metrics.
struct Run {
    scenario: Scenario,
    mode: Mode,
    trace: Trace,
    problems: Vec<String>,
}

fn run_both_modes(scenarios: &[Scenario]) -> Vec<Run> {
    scenarios
        .par_iter()
        .flat_map_iter(|s| {
            [Mode::Discof, Mode::DiscofPlus].into_iter().map(move |mode| {
                let trace = executor::run(s, &RunConfig::new(mode)).expect("generated instances pass preflight");
                let problems = harness::check_safety(s, &trace);
                Run { scenario: s.clone(), mode, trace, problems }
            })
        })
        .collect()
}

fn instances(base: u64, rate_index: usize, rate: f64, count: usize) -> Vec<Scenario> {
    (0..count)
        .map(|i| generate_instance(instance_seed(base, rate_index, i), 20, 20, 30, rate).expect("instance generation"))
        .collect()
}

fn label(run: &Run) -> String {
    format!("seed {} {}", run.scenario.seed(), run.mode.name())
}

/// Zero violations of the collision rules, both per release and on the
/// continuous timeline.
fn safety(runs: &[Run]) -> Verdict {
    let mut bad = Vec::new();
    for run in runs {
        let restrictions = collision_restrictions();
        let mut problems = run.problems.clone();
        // the synchronised sub-trace of every release, rechecked here
        for rel in &run.trace.releases {
            match validate_trace(run.scenario.graph(), &[rel.before.clone(), rel.after.clone()], &restrictions) {
                Ok(r) if r.is_empty() => {}
                other => problems.push(format!("{other:?}")),
            }
        }
        if !problems.is_empty() {
            bad.push(format!("{}: {}", label(run), problems[0]));
        }
    }
    let detail = format!("{} runs, {} unsafe {}", runs.len(), bad.len(), bad.first().cloned().unwrap_or_default());
    verdict(bad.is_empty(), detail)
}

fn completeness(runs: &[Run]) -> Verdict {
    let failed: Vec<String> =
        runs.iter().filter(|r| !r.trace.outcome.is_completed()).map(|r| format!("{} ({})", label(r), r.trace.outcome)).collect();
    let bad_positions = runs
        .iter()
        .filter(|r| r.trace.outcome.is_completed() && r.trace.final_positions() != r.scenario.goals())
        .count();
    verdict(
        failed.is_empty() && bad_positions == 0,
        format!("{} runs, {} incomplete, {} off goal {}", runs.len(), failed.len(), bad_positions, failed.join(", ")),
    )
}

/// Recomputes every certificate from its raw members and checks that the
/// goal-cost sum drops across each convergence episode and decoupling.
fn certificates(runs: &[Run]) -> Verdict {
    let mut checked = 0usize;
    let mut decouples = 0usize;
    let mut failures = Vec::new();
    for run in runs {
        let costs = GoalDistances::for_scenario(&run.scenario);
        let c = |r: usize, v: Vertex| costs.cost(r, v) as i64;
        for cert in &run.trace.certificates {
            checked += 1;
            let lhs: i64 = cert.members.iter().map(|m| c(m.robot, m.origin) + m.gamma_pre).sum();
            let rhs: i64 = cert.members.iter().map(|m| c(m.robot, m.target)).sum();
            if cert.kind == CertificateKind::Decouple {
                decouples += 1;
                if run.mode == Mode::Discof {
                    failures.push(format!("{}: decoupling in plain mode", label(run)));
                }
                if cert.group.is_none() {
                    failures.push(format!("{}: decoupling without a group", label(run)));
                }
            }
            if lhs != cert.lhs || rhs != cert.rhs || lhs <= rhs {
                failures.push(format!("{} t={}: lhs {} rhs {} recomputed {lhs} {rhs}", label(run), cert.time, cert.lhs, cert.rhs));
            }
            if cert.kind == CertificateKind::Convergence {
                // sampled sum when every participant finishes its local plan
                let done: Vec<_> = cert
                    .members
                    .iter()
                    .filter_map(|m| {
                        run.trace.completions.iter().find(|l| l.robot == m.robot && l.time >= cert.time && l.local_goal == m.target)
                    })
                    .collect();
                if done.len() == cert.members.len() {
                    let sampled: i64 = done.iter().map(|l| c(l.robot, l.position)).sum();
                    if sampled != rhs || sampled >= lhs {
                        failures.push(format!("{} t={}: completion sum {sampled} vs {lhs}", label(run), cert.time));
                    }
                }
            }
        }
    }
    verdict(
        failures.is_empty(),
        format!("{checked} certificates ({decouples} decouplings), {} failures {}", failures.len(), failures.first().cloned().unwrap_or_default()),
    )
}

fn tiny_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let w = rng.gen_range(1..=4u32);
        let h = rng.gen_range(2..=4u32);
        let cells: Vec<(u32, u32)> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).collect();
        let blocked = rng.gen_range(0..=cells.len() / 3);
        let obstacles: Vec<(u32, u32)> = cells.choose_multiple(&mut rng, blocked).copied().collect();
        let Ok(g) = WorldGraph::build_grid(w, h, &obstacles) else { continue };
        let free: Vec<Vertex> = g.vertices().collect();
        let robots = rng.gen_range(1..=3usize);
        if free.len() < robots {
            continue;
        }
        let starts: Vec<Vertex> = free.choose_multiple(&mut rng, robots).copied().collect();
        let goals: Vec<Vertex> = free.choose_multiple(&mut rng, robots).copied().collect();
        let specs = (0..robots).map(|i| RobotSpec { id: i as u32, start: starts[i], goal: goals[i] }).collect();
        if let Ok(s) = Scenario::new(g, specs, seed) {
            return s;
        }
    }
}

/// Tiny scenarios against the exhaustive centralized search.
fn oracle_equivalence() -> Verdict {
    let outcomes: Vec<(u64, bool, Result<Outcome, String>)> = (0..600u64)
        .into_par_iter()
        .map(|seed| {
            let s = tiny_scenario(seed);
            let states = s.graph().vertex_count().pow(s.robot_count() as u32);
            let plan = oracle_solve(&s, &collision_restrictions(), states, DEFAULT_STATE_BUDGET).expect("tiny state space");
            let sim = executor::run(&s, &RunConfig::default()).map(|t| t.outcome).map_err(|e| e.to_string());
            (seed, plan.is_some(), sim)
        })
        .collect();
    let solvable = outcomes.iter().filter(|o| o.1).count();
    let disagreements: Vec<String> = outcomes
        .iter()
        .filter(|(_, solvable, sim)| match sim {
            Ok(outcome) => outcome.is_completed() != *solvable,
            Err(_) => *solvable,
        })
        .map(|(seed, solvable, sim)| format!("seed {seed} oracle={solvable} sim={sim:?}"))
        .collect();
    verdict(
        disagreements.is_empty(),
        format!(
            "{} scenarios ({solvable} solvable), {} disagreements {}",
            outcomes.len(),
            disagreements.len(),
            disagreements.iter().take(3).cloned().collect::<Vec<_>>().join("; ")
        ),
    )
}

fn paired(rows: &[InstanceResult]) -> HashMap<u64, (u64, u64)> {
    let mut by_seed: HashMap<u64, (u64, u64)> = HashMap::new();
    for r in rows {
        let e = by_seed.entry(r.seed).or_default();
        match r.mode {
            Mode::Discof => e.0 = r.steps,
            Mode::DiscofPlus => e.1 = r.steps,
        }
    }
    by_seed
}

fn step_ratios(rows: &[InstanceResult]) -> Verdict {
    let (_, ratios) = aggregate(rows);
    let mut pass = ratios.len() == RATES.len();
    let mut parts = Vec::new();
    for r in &ratios {
        pass &= r.steps <= 0.7 && r.not_worse >= 0.8;
        parts.push(format!("{:.0}%: ratio {:.4} not-worse {:.2}", r.rate * 100.0, r.steps, r.not_worse));
    }
    verdict(pass, parts.join(", "))
}

fn decoupling_direction(rows: &[InstanceResult]) -> Verdict {
    let pairs = paired(rows);
    let better = pairs.values().filter(|(plain, plus)| plus <= plain).count();
    let share = better as f64 / pairs.len() as f64;
    verdict(pairs.len() == 100 && share >= 0.8, format!("{better}/{} instances with enabled <= disabled", pairs.len()))
}

fn bfs(g: &WorldGraph, from: Vertex) -> HashMap<Vertex, i64> {
    let mut dist = HashMap::from([(from, 0i64)]);
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        for &w in g.neighbors(v) {
            if !dist.contains_key(&w) {
                dist.insert(w, dist[&v] + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Contribution values at local-plan completion, and against plain BFS
/// arithmetic on random triples.
fn contribution_values(runs: &[Run]) -> Verdict {
    let completions: usize = runs.iter().map(|r| r.trace.completions.len()).sum();
    let nonzero: Vec<String> = runs
        .iter()
        .flat_map(|r| r.trace.completions.iter().map(move |c| (r, c)))
        .filter(|(_, c)| c.gamma != 0 || c.position != c.local_goal)
        .map(|(r, c)| format!("{} robot {} gamma {}", label(r), c.robot, c.gamma))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0usize;
    let mut triples = 0usize;
    while triples < 1000 {
        let s = generate_instance(rng.gen(), 12, 12, 1, rng.gen_range(0.0..0.25)).expect("instance generation");
        let g = s.graph();
        let free: Vec<Vertex> = g.vertices().collect();
        let goal = s.goals()[0];
        let from_goal = bfs(g, goal);
        let costs = GoalDistances::new(g, &[goal]);
        for _ in 0..20 {
            let lg = *free.choose(&mut rng).unwrap();
            let pos = *free.choose(&mut rng).unwrap();
            let (Some(a), Some(b)) = (from_goal.get(&lg), from_goal.get(&pos)) else { continue };
            let len = rng.gen_range(1..=6usize);
            let delta = rng.gen_range(0..=len);
            let mut ledger = ContributionLedger::new(1);
            ledger.begin_local(0, lg, len);
            let value = update_contribution(&mut ledger, 0, delta, pos, &costs).expect("active local plan");
            mismatches += usize::from(value != a - b);
            let ended = ledger.local_goal(0).is_none();
            mismatches += usize::from(ended != (delta == len));
            triples += 1;
        }
    }
    verdict(
        nonzero.is_empty() && mismatches == 0,
        format!(
            "{completions} local plans, {} nonzero at end; {triples} triples, {mismatches} mismatches {}",
            nonzero.len(),
            nonzero.first().cloned().unwrap_or_default()
        ),
    )
}

fn determinism() -> Verdict {
    let s = generate_instance(77, 20, 20, 30, 0.15).expect("instance generation");
    let mut cfg = RunConfig::new(Mode::DiscofPlus);
    cfg.seed = Some(9);
    cfg.sync_only_on_conflict = true;
    cfg.durations = StepDuration::Uniform { min: 1, max: 5 };
    let outputs: Vec<(String, String, String)> = (0..3)
        .map(|_| {
            let t = executor::run(&s, &cfg).expect("preflight");
            let bench = ExperimentConfig { instances: 3, obstacle_rates: vec![0.1], seed: 5, ..ExperimentConfig::default() };
            let rows = harness::run_experiment(&bench).expect("experiment");
            (t.to_csv(), t.event_log(), harness::instances_csv(&rows, true))
        })
        .collect();
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    verdict(same, format!("3 runs, {} trace bytes, {} event bytes", outputs[0].0.len(), outputs[0].1.len()))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut results: Vec<Verdict> = Vec::new();
    // elapsed time is cumulative, since runs are shared between criteria
    let mut record = |n: u32, name: &str, f: &mut dyn FnMut() -> Verdict| {
        let v = f();
        let secs = started.elapsed().as_secs_f64();
        println!("{} criterion {n} {name}: {} [t={secs:.1}s]", if v.pass { "PASS" } else { "FAIL" }, v.detail.trim_end());
        results.push(v);
    };

    // 50 instances per rate, both modes, traces kept
    let safety_set: Vec<Scenario> = RATES.iter().enumerate().flat_map(|(k, &r)| instances(0, k, r, 50)).collect();
    let safety_runs = run_both_modes(&safety_set);
    let complete_runs = run_both_modes(&instances(500, 1, 0.10, 100));

    record(1, "safety", &mut || safety(&safety_runs));
    record(2, "completeness", &mut || completeness(&complete_runs));
    record(3, "oracle equivalence", &mut oracle_equivalence);
    let all: Vec<Run> = safety_runs.into_iter().chain(complete_runs).collect();
    record(4, "progress certificates", &mut || certificates(&all));

    let table = ExperimentConfig { seed: 0, ..ExperimentConfig::default() };
    let rows = harness::run_experiment(&table).expect("experiment");
    record(5, "step-count improvement", &mut || step_ratios(&rows));

    // 20x20 at 10% carries exactly 40 obstacles
    let direction = ExperimentConfig { seed: 9_000_000, obstacle_rates: vec![0.10], ..ExperimentConfig::default() };
    let rows = harness::run_experiment(&direction).expect("experiment");
    record(6, "decoupling direction", &mut || decoupling_direction(&rows));

    record(7, "contribution values", &mut || contribution_values(&all));
    record(8, "determinism", &mut determinism);

    let failed = results.iter().filter(|r| !r.pass).count();
    println!("acceptance: {} passed, {failed} failed in {:.1}s", results.len() - failed, started.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
