use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use discof::coordination::SensingConfig;
use discof::executor::{self, Mode, RunConfig};
use discof::harness::{self, ExperimentConfig};
use discof::model::{collision_restrictions, oracle_solve, state_budget_from_env};
use discof::world::{load_scenario, Scenario};

/// Exit status for rejected input or a run that fails its safety audit.
const VALIDATION_FAILURE: u8 = 2;

#[derive(Parser)]
#[command(name = "discof", version, about = "Distributed cooperative pathfinding simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace.
    Simulate(SimulateArgs),
    /// Generate random instances and compare both modes.
    Bench(BenchArgs),
    /// Solve a small scenario exactly with the centralized reference search.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "discof_plus")]
    mode: Mode,
    /// Seed for step durations; defaults to the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = SensingConfig::default().sensing_range)]
    sensing_range: u32,
    /// Prediction horizon; defaults to the sensing range.
    #[arg(long)]
    beta: Option<u32>,
    #[arg(long)]
    sync_only_on_conflict: bool,
    /// Every robot's steps take this many time units instead of a random 1..=5.
    #[arg(long)]
    constant_duration: Option<u64>,
    #[arg(long)]
    step_budget: Option<u64>,
    /// Per-step CSV trace.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Line-delimited event log.
    #[arg(long)]
    events_out: Option<PathBuf>,
    /// Directory for text frames and the SVG overview.
    #[arg(long)]
    render_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 20)]
    width: u32,
    #[arg(long, default_value_t = 20)]
    height: u32,
    #[arg(long, default_value_t = 30)]
    robots: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.10, 0.15, 0.20])]
    obstacle_rates: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = SensingConfig::default().sensing_range)]
    sensing_range: u32,
    #[arg(long)]
    beta: Option<u32>,
    #[arg(long, default_value_t = 5.0)]
    seconds_per_move: f64,
    /// Leave wall-clock columns blank so outputs are reproducible.
    #[arg(long)]
    mask_time: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Longest makespan to search.
    #[arg(long)]
    horizon: usize,
}

/// Input that fails validation; reported with the dedicated exit status.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(e: impl std::fmt::Display) -> anyhow::Error {
    Invalid(e.to_string()).into()
}

fn sensing(range: u32, beta: Option<u32>) -> anyhow::Result<SensingConfig> {
    SensingConfig::new(range, beta.unwrap_or(range)).map_err(invalid)
}

fn read_scenario(path: &Path) -> anyhow::Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load_scenario(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn simulate(args: SimulateArgs) -> anyhow::Result<ExitCode> {
    let scenario = read_scenario(&args.scenario)?;
    let mut cfg = RunConfig::new(args.mode);
    cfg.sensing = sensing(args.sensing_range, args.beta)?;
    cfg.seed = args.seed;
    cfg.sync_only_on_conflict = args.sync_only_on_conflict;
    cfg.step_budget = args.step_budget;
    if let Some(d) = args.constant_duration {
        cfg.durations = executor::StepDuration::Constant(d);
    }
    let trace = executor::run(&scenario, &cfg).map_err(invalid)?;
    let problems = harness::check_safety(&scenario, &trace);

    if let Some(path) = &args.trace_out {
        write(path, &trace.to_csv())?;
    }
    if let Some(path) = &args.events_out {
        write(path, &trace.event_log())?;
    }
    if let Some(dir) = &args.render_out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let frames = harness::render_frames(&trace, &scenario)?;
        let digits = frames.len().to_string().len().max(4);
        for (k, frame) in frames.iter().enumerate() {
            write(&dir.join(format!("frame_{k:0digits$}.txt")), frame)?;
        }
        write(&dir.join("overview.svg"), &harness::render_svg(&trace, &scenario)?)?;
    }

    println!("outcome: {}", trace.outcome);
    println!("steps: {}", harness::run_steps(&trace));
    println!("sum_of_steps: {}", trace.sum_of_steps());
    println!("planning_time_s: {:.6}", trace.planning_time.as_secs_f64());
    if !problems.is_empty() {
        for p in &problems {
            eprintln!("unsafe: {p}");
        }
        return Ok(ExitCode::from(VALIDATION_FAILURE));
    }
    Ok(if trace.outcome.is_completed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn bench(args: BenchArgs) -> anyhow::Result<ExitCode> {
    if args.obstacle_rates.iter().any(|r| !(0.0..1.0).contains(r)) {
        return Err(invalid("obstacle rates must lie in [0, 1)"));
    }
    let cfg = ExperimentConfig {
        width: args.width,
        height: args.height,
        robots: args.robots,
        obstacle_rates: args.obstacle_rates,
        instances: args.instances,
        seed: args.seed,
        sensing: sensing(args.sensing_range, args.beta)?,
        seconds_per_move: args.seconds_per_move,
        ..ExperimentConfig::default()
    };
    let rows = harness::run_experiment(&cfg).map_err(invalid)?;
    let (summaries, ratios) = harness::aggregate(&rows);
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write(&args.out.join("instances.csv"), &harness::instances_csv(&rows, args.mask_time))?;
    write(&args.out.join("summary.csv"), &harness::summary_csv(&summaries, args.mask_time))?;
    write(&args.out.join("ratios.csv"), &harness::ratios_csv(&ratios, args.mask_time))?;
    print!("{}", harness::ratios_csv(&ratios, args.mask_time));
    Ok(ExitCode::SUCCESS)
}

fn oracle(args: OracleArgs) -> anyhow::Result<ExitCode> {
    let scenario = read_scenario(&args.scenario)?;
    let plan = oracle_solve(&scenario, &collision_restrictions(), args.horizon, state_budget_from_env())?;
    let Some(plan) = plan else {
        println!("no plan within {} steps", args.horizon);
        return Ok(ExitCode::FAILURE);
    };
    let g = scenario.graph();
    println!("makespan: {}", plan.makespan());
    for (i, r) in scenario.robots().iter().enumerate() {
        let cells: Vec<String> = plan
            .robot_path(i)
            .into_iter()
            .map(|v| {
                let (x, y) = g.coords(v);
                format!("({x},{y})")
            })
            .collect();
        println!("robot {}: {}", r.id, cells.join(" "));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Bench(args) => bench(args),
        Command::Oracle(args) => oracle(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Invalid>() {
                ExitCode::from(VALIDATION_FAILURE)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
