use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::InstanceResult;
use crate::executor::Mode;

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeSummary {
    pub rate: f64,
    pub mode: Mode,
    pub runs: usize,
    pub completed: usize,
    pub comp_time: Stats,
    pub steps: Stats,
    pub sum_of_steps: Stats,
    pub approx_run_time: Stats,
}

/// Plus-mode over plain-mode ratios on one obstacle rate.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioRow {
    pub rate: f64,
    pub instances: usize,
    pub steps: f64,
    pub sum_of_steps: f64,
    pub comp_time: f64,
    pub approx_run_time: f64,
    /// Share of instances where the plus mode needed no more steps.
    pub not_worse: f64,
}

fn rate_key(rate: f64) -> u64 {
    (rate * 1e6).round() as u64
}

/// Per-(rate, mode) summaries and, where both modes ran, per-rate ratios
/// over the instances both modes share.
pub fn aggregate(rows: &[InstanceResult]) -> (Vec<ModeSummary>, Vec<RatioRow>) {
    let mut by: BTreeMap<(u64, &'static str), Vec<&InstanceResult>> = BTreeMap::new();
    for r in rows {
        by.entry((rate_key(r.rate), r.mode.name())).or_default().push(r);
    }
    let summaries = by
        .values()
        .map(|runs| {
            let col = |f: fn(&InstanceResult) -> f64| Stats::of(&runs.iter().map(|r| f(r)).collect::<Vec<_>>());
            ModeSummary {
                rate: runs[0].rate,
                mode: runs[0].mode,
                runs: runs.len(),
                completed: runs.iter().filter(|r| r.outcome.is_completed()).count(),
                comp_time: col(|r| r.comp_time),
                steps: col(|r| r.steps as f64),
                sum_of_steps: col(|r| r.sum_of_steps as f64),
                approx_run_time: col(|r| r.approx_run_time),
            }
        })
        .collect();

    let mut pairs: BTreeMap<u64, Vec<(&InstanceResult, &InstanceResult)>> = BTreeMap::new();
    let mut plain: BTreeMap<(u64, u64), &InstanceResult> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.mode == Mode::Discof) {
        plain.insert((rate_key(r.rate), r.seed), r);
    }
    for r in rows.iter().filter(|r| r.mode == Mode::DiscofPlus) {
        if let Some(p) = plain.get(&(rate_key(r.rate), r.seed)) {
            pairs.entry(rate_key(r.rate)).or_default().push((p, r));
        }
    }
    let ratios = pairs
        .values()
        .map(|ps| {
            let mean = |f: fn(&InstanceResult) -> f64, plus: bool| {
                ps.iter().map(|(a, b)| f(if plus { b } else { a })).sum::<f64>() / ps.len() as f64
            };
            let ratio = |f: fn(&InstanceResult) -> f64| {
                let base = mean(f, false);
                if base == 0.0 {
                    1.0
                } else {
                    mean(f, true) / base
                }
            };
            RatioRow {
                rate: ps[0].0.rate,
                instances: ps.len(),
                steps: ratio(|r| r.steps as f64),
                sum_of_steps: ratio(|r| r.sum_of_steps as f64),
                comp_time: ratio(|r| r.comp_time),
                approx_run_time: ratio(|r| r.approx_run_time),
                not_worse: ps.iter().filter(|(a, b)| b.steps <= a.steps).count() as f64 / ps.len() as f64,
            }
        })
        .collect();
    (summaries, ratios)
}

/// One line per (instance, mode). `mask_time` blanks the wall-clock
/// columns, which differ between runs.
pub fn instances_csv(rows: &[InstanceResult], mask_time: bool) -> String {
    let mut out = String::from("rate,seed,mode,outcome,comp_time_s,steps,sum_of_steps,approx_run_time_s\n");
    for r in rows {
        let outcome = match &r.outcome {
            crate::executor::Outcome::Completed => "completed",
            crate::executor::Outcome::BudgetExceeded { .. } => "budget_exceeded",
            crate::executor::Outcome::Infeasible { .. } => "infeasible",
        };
        let (comp, approx) = if mask_time {
            ("-".to_string(), "-".to_string())
        } else {
            (format!("{:.6}", r.comp_time), format!("{:.6}", r.approx_run_time))
        };
        writeln!(out, "{:.2},{},{},{outcome},{comp},{},{},{approx}", r.rate, r.seed, r.mode.name(), r.steps, r.sum_of_steps)
            .unwrap();
    }
    out
}

pub fn summary_csv(summaries: &[ModeSummary], mask_time: bool) -> String {
    let mut out = String::from(
        "rate,mode,runs,completed,comp_time_mean,comp_time_std,steps_mean,steps_std,sum_of_steps_mean,sum_of_steps_std,approx_run_time_mean,approx_run_time_std\n",
    );
    for s in summaries {
        let timed = |st: Stats| if mask_time { "-,-".to_string() } else { format!("{:.6},{:.6}", st.mean, st.std) };
        writeln!(
            out,
            "{:.2},{},{},{},{},{:.3},{:.3},{:.3},{:.3},{}",
            s.rate,
            s.mode.name(),
            s.runs,
            s.completed,
            timed(s.comp_time),
            s.steps.mean,
            s.steps.std,
            s.sum_of_steps.mean,
            s.sum_of_steps.std,
            timed(s.approx_run_time)
        )
        .unwrap();
    }
    out
}

pub fn ratios_csv(ratios: &[RatioRow], mask_time: bool) -> String {
    let mut out =
        String::from("rate,instances,steps_ratio,sum_of_steps_ratio,comp_time_ratio,approx_run_time_ratio,not_worse_fraction\n");
    for r in ratios {
        let (comp, approx) = if mask_time {
            ("-".to_string(), "-".to_string())
        } else {
            (format!("{:.4}", r.comp_time), format!("{:.4}", r.approx_run_time))
        };
        writeln!(out, "{:.2},{},{:.4},{:.4},{comp},{approx},{:.4}", r.rate, r.instances, r.steps, r.sum_of_steps, r.not_worse)
            .unwrap();
    }
    out
}
