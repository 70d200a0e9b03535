//! Runs frontier entries on a pool of worker threads and summarizes the run.
//!
//! Entries are handed out largest estimate first; each worker takes the next
//! entry when it becomes idle. A panicking solve is retried once before the
//! run is aborted.

use std::collections::VecDeque;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::frontier::{recombine, Frontier, FrontierError};
use crate::problem::Problem;
use crate::search::{solve, SearchConfig, SearchResult, SubproblemHandle};

pub const PERCENTILES: [u32; 4] = [0, 20, 80, 100];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryRun {
    pub entry: usize,
    pub worker: usize,
    pub attempts: u32,
    /// Solver wall time in seconds.
    pub runtime: f64,
    pub expansions: u64,
    pub optimum: f64,
    pub estimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    /// Nearest-rank percentiles, in [`PERCENTILES`] order.
    pub percentiles: [f64; 4],
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        if values.is_empty() {
            return Summary::default();
        }
        let [min, max, median, mean, std] = crate::features::summary(values);
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Summary {
            min,
            max,
            mean,
            median,
            std,
            percentiles: PERCENTILES.map(|p| nearest_rank(&sorted, p)),
        }
    }
}

/// Nearest-rank percentile of ascending `sorted`: the value at rank
/// `ceil(p/100 · n)`, with rank 0 read as 1.
pub fn nearest_rank(sorted: &[f64], p: u32) -> f64 {
    assert!(!sorted.is_empty() && p <= 100);
    let n = sorted.len();
    let rank = (p as usize * n).div_ceil(100).max(1);
    sorted[rank - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub policy: String,
    pub workers: usize,
    /// Completed entries, by entry index.
    pub entries: Vec<EntryRun>,
    pub runtime: Summary,
    pub nodes: Summary,
    pub total_nodes: u64,
    /// Master-side frontier construction time in seconds.
    pub overhead: f64,
    pub wall_clock: f64,
    /// Recombined global optimum; `None` when the run was aborted.
    pub optimum: Option<f64>,
    /// Entries that failed twice.
    pub failed: Vec<usize>,
    pub aborted: bool,
}

impl RunReport {
    pub fn runtimes(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.runtime).collect()
    }

    pub fn node_counts(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.expansions as f64).collect()
    }
}

/// Solver used by workers; the default solves exactly with [`solve`].
pub type Solver<'a> = dyn Fn(&Problem, &SubproblemHandle) -> SearchResult + Sync + 'a;

pub fn default_solver(p: &Problem, h: &SubproblemHandle) -> SearchResult {
    solve(p, h, SearchConfig::default())
}

/// Entry indices in dispatch order: decreasing estimate, then index.
pub fn dispatch_order(frontier: &Frontier) -> Vec<usize> {
    let mut order: Vec<usize> = (0..frontier.len()).collect();
    order.sort_by(|&a, &b| {
        frontier.entries[b]
            .estimate
            .total_cmp(&frontier.entries[a].estimate)
            .then(a.cmp(&b))
    });
    order
}

enum Message {
    Done(EntryRun),
    Failed(usize),
}

/// Solves every entry on `workers` threads and recombines the optima.
pub fn execute(
    p: &Problem,
    frontier: &Frontier,
    workers: usize,
    policy: &str,
    solver: &Solver<'_>,
) -> Result<RunReport, FrontierError> {
    assert!(workers >= 1, "need at least one worker");
    let start = Instant::now();
    let queue: Mutex<VecDeque<(usize, u32)>> =
        Mutex::new(dispatch_order(frontier).into_iter().map(|i| (i, 0)).collect());
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel();

    std::thread::scope(|s| {
        for worker in 0..workers {
            let tx = tx.clone();
            let (queue, abort) = (&queue, &abort);
            s.spawn(move || loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let Some((entry, attempts)) = queue.lock().unwrap().pop_front() else {
                    break;
                };
                let e = &frontier.entries[entry];
                let t = Instant::now();
                match catch_unwind(AssertUnwindSafe(|| solver(p, &e.handle))) {
                    Ok(r) => {
                        let run = EntryRun {
                            entry,
                            worker,
                            attempts: attempts + 1,
                            runtime: t.elapsed().as_secs_f64(),
                            expansions: r.expansions,
                            optimum: r.optimum,
                            estimate: e.estimate,
                        };
                        let _ = tx.send(Message::Done(run));
                    }
                    Err(_) if attempts == 0 => queue.lock().unwrap().push_back((entry, 1)),
                    Err(_) => {
                        abort.store(true, Ordering::SeqCst);
                        let _ = tx.send(Message::Failed(entry));
                    }
                }
            });
        }
    });
    drop(tx);

    let mut slots: Vec<Option<EntryRun>> = vec![None; frontier.len()];
    let mut failed = Vec::new();
    for m in rx {
        match m {
            Message::Done(r) => {
                let i = r.entry;
                slots[i] = Some(r);
            }
            Message::Failed(i) => failed.push(i),
        }
    }
    failed.sort_unstable();
    let aborted = !failed.is_empty();
    let optima: Vec<Option<f64>> = slots.iter().map(|r| r.as_ref().map(|r| r.optimum)).collect();
    let optimum = if aborted { None } else { Some(recombine(frontier, &optima)?) };
    let entries: Vec<EntryRun> = slots.into_iter().flatten().collect();
    let runtimes: Vec<f64> = entries.iter().map(|e| e.runtime).collect();
    let nodes: Vec<f64> = entries.iter().map(|e| e.expansions as f64).collect();
    Ok(RunReport {
        policy: policy.to_string(),
        workers,
        runtime: Summary::of(&runtimes),
        nodes: Summary::of(&nodes),
        total_nodes: entries.iter().map(|e| e.expansions).sum(),
        entries,
        overhead: frontier.overhead,
        wall_clock: start.elapsed().as_secs_f64() + frontier.overhead,
        optimum,
        failed,
        aborted,
    })
}

/// Longest-processing-time-first list scheduling on `w` machines; returns
/// the finishing time of the busiest machine.
pub fn simulate_schedule(costs: &[f64], w: usize) -> f64 {
    assert!(w >= 1, "need at least one machine");
    assert!(costs.iter().all(|&c| c >= 0.0), "costs must be non-negative");
    let mut sorted = costs.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut load = vec![0.0f64; w.min(costs.len()).max(1)];
    for c in sorted {
        let (i, _) = load
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        load[i] += c;
    }
    let makespan = load.iter().copied().fold(0.0, f64::max);
    let max = costs.iter().copied().fold(0.0, f64::max);
    let total: f64 = costs.iter().sum();
    let slack = 1e-9 * (1.0 + total);
    assert!(max <= makespan + slack);
    assert!(makespan <= max.max(2.0 * total / w as f64) + slack);
    makespan
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupCurve {
    pub policy: String,
    /// `(cpus, speedup)`.
    pub points: Vec<(usize, f64)>,
}

/// Speedup over sequential solving for each machine count, with the
/// master's overhead charged once to both sides.
pub fn speedup_from_costs(costs: &[f64], overhead: f64, grid: &[usize], policy: &str) -> SpeedupCurve {
    let total: f64 = costs.iter().sum::<f64>() + overhead;
    SpeedupCurve {
        policy: policy.to_string(),
        points: grid
            .iter()
            .map(|&w| {
                let par = simulate_schedule(costs, w) + overhead;
                (w, if par > 0.0 { total / par } else { 1.0 })
            })
            .collect(),
    }
}

pub fn speedup_curve(report: &RunReport, grid: &[usize]) -> SpeedupCurve {
    speedup_from_costs(&report.runtimes(), report.overhead, grid, &report.policy)
}

/// Per-entry rows followed by a `stat,value` footer.
pub fn write_report_csv<W: Write>(out: W, report: &RunReport) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let io = |e: csv::Error| std::io::Error::other(e);
    w.write_record(["entry", "worker", "attempts", "runtime", "nodes", "optimum", "estimate"])
        .map_err(io)?;
    for e in &report.entries {
        w.write_record([
            e.entry.to_string(),
            e.worker.to_string(),
            e.attempts.to_string(),
            e.runtime.to_string(),
            e.expansions.to_string(),
            e.optimum.to_string(),
            e.estimate.to_string(),
        ])
        .map_err(io)?;
    }
    let mut stats: Vec<(String, String)> = vec![
        ("policy".into(), report.policy.clone()),
        ("workers".into(), report.workers.to_string()),
        ("entries".into(), report.entries.len().to_string()),
    ];
    for (name, s) in [("runtime", &report.runtime), ("nodes", &report.nodes)] {
        stats.push((format!("{name}_min"), s.min.to_string()));
        stats.push((format!("{name}_max"), s.max.to_string()));
        stats.push((format!("{name}_mean"), s.mean.to_string()));
        stats.push((format!("{name}_median"), s.median.to_string()));
        stats.push((format!("{name}_std"), s.std.to_string()));
        for (p, v) in PERCENTILES.iter().zip(s.percentiles) {
            stats.push((format!("{name}_p{p}"), v.to_string()));
        }
    }
    stats.push(("total_nodes".into(), report.total_nodes.to_string()));
    stats.push(("overhead".into(), report.overhead.to_string()));
    stats.push(("wall_clock".into(), report.wall_clock.to_string()));
    stats.push((
        "optimum".into(),
        report.optimum.map(|v| v.to_string()).unwrap_or_default(),
    ));
    stats.push(("aborted".into(), report.aborted.to_string()));
    w.write_record(["stat", "value"]).map_err(io)?;
    for (k, v) in stats {
        w.write_record([k, v]).map_err(io)?;
    }
    w.flush()
}

/// Two columns: rank by ascending runtime, log10 runtime.
pub fn write_runtime_plot<W: Write>(mut out: W, report: &RunReport) -> std::io::Result<()> {
    let mut r = report.runtimes();
    r.sort_by(f64::total_cmp);
    writeln!(out, "# index log10_runtime")?;
    for (i, t) in r.iter().enumerate() {
        writeln!(out, "{} {}", i, t.max(1e-9).log10())?;
    }
    Ok(())
}

/// Two columns: cpus, speedup.
pub fn write_speedup_plot<W: Write>(mut out: W, curve: &SpeedupCurve) -> std::io::Result<()> {
    writeln!(out, "# cpus speedup ({})", curve.policy)?;
    for (w, s) in &curve.points {
        writeln!(out, "{w} {s}")?;
    }
    Ok(())
}
