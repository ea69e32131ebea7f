//! Speedup benchmark harness.
//!
//! Every (dataset, worker count) cell runs the same seeded clustering job.
//! Before any time is reported, all cells of one dataset must agree on the
//! medoids, the assignment, the cost trace and the iteration count; timings
//! of divergent runs are meaningless.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::job::{run_clustering_timed, ClusterConfig, ClusteringResult};
use crate::model::Point;
use crate::rng::SeededRng;

pub const BENCH_CSV_HEADER: &str = "dataset,workers,time_ms,iterations,cost,speedup";

/// Ratio of the baseline time to the time at a higher worker count.
pub fn compute_speedup(t_base_ms: f64, t_n_ms: f64) -> Result<f64> {
    if !(t_base_ms > 0.0 && t_n_ms > 0.0) || !t_base_ms.is_finite() || !t_n_ms.is_finite() {
        return Err(Error::InvalidInput(format!(
            "speedup needs positive times, got {t_base_ms} and {t_n_ms}"
        )));
    }
    Ok(t_base_ms / t_n_ms)
}

/// Median of a non-empty sample; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

#[derive(Debug, Clone, Copy)]
pub struct NamedDataset<'a> {
    pub label: &'a str,
    pub points: &'a [Point],
}

#[derive(Debug, Clone)]
pub struct BenchPlan<'a> {
    pub datasets: Vec<NamedDataset<'a>>,
    /// Ascending and distinct.
    pub worker_counts: Vec<usize>,
    pub k: usize,
    pub seed: u64,
    pub repetitions: usize,
    /// Template for every cell; the worker and split counts are overridden.
    pub config: ClusterConfig,
}

impl BenchPlan<'_> {
    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::InvalidInput("benchmark plan has no datasets".into()));
        }
        for d in &self.datasets {
            if d.label.is_empty() || d.label.contains([',', '\n', '"']) {
                return Err(Error::InvalidInput(format!(
                    "dataset label {:?} must be non-empty without commas, quotes or newlines",
                    d.label
                )));
            }
        }
        if self.worker_counts.is_empty() || self.worker_counts.contains(&0) {
            return Err(Error::InvalidInput(
                "worker counts must be a non-empty list of positive integers".into(),
            ));
        }
        if !self.worker_counts.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput(
                "worker counts must be sorted ascending and distinct".into(),
            ));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidInput("repetitions must be at least 1".into()));
        }
        Ok(())
    }
}

/// One measured (dataset, worker count) cell before speedups are derived.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchCell {
    pub dataset: String,
    pub workers: usize,
    pub time_ms: f64,
    pub iterations: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub dataset: String,
    pub workers: usize,
    /// Median wall time of the iterative job.
    pub time_ms: f64,
    pub iterations: usize,
    pub cost: f64,
    /// Relative to the smallest worker count of the same dataset.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    /// Derives speedups per dataset against its smallest worker count.
    pub fn from_cells(cells: Vec<BenchCell>) -> Result<Self> {
        let mut rows = Vec::with_capacity(cells.len());
        for cell in &cells {
            let base = cells
                .iter()
                .filter(|c| c.dataset == cell.dataset)
                .min_by_key(|c| c.workers)
                .expect("cell is in its own dataset");
            rows.push(BenchRow {
                dataset: cell.dataset.clone(),
                workers: cell.workers,
                time_ms: cell.time_ms,
                iterations: cell.iterations,
                cost: cell.cost,
                speedup: compute_speedup(base.time_ms, cell.time_ms)?,
            });
        }
        Ok(BenchReport { rows })
    }

    pub fn datasets(&self) -> Vec<&str> {
        let mut labels: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !labels.contains(&r.dataset.as_str()) {
                labels.push(&r.dataset);
            }
        }
        labels
    }

    pub fn rows_for<'r>(&'r self, dataset: &'r str) -> impl Iterator<Item = &'r BenchRow> {
        self.rows.iter().filter(move |r| r.dataset == dataset)
    }

    /// Smallest worker count per dataset, the speedup baseline.
    pub fn baseline_workers(&self, dataset: &str) -> Option<usize> {
        self.rows_for(dataset).map(|r| r.workers).min()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(BENCH_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:?},{},{:?},{:?}",
                r.dataset, r.workers, r.time_ms, r.iterations, r.cost, r.speedup
            );
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Parse {
            path: PathBuf::from("bench.csv"),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == BENCH_CSV_HEADER => {}
            other => {
                return Err(bad(
                    1,
                    format!(
                        "expected header {BENCH_CSV_HEADER:?}, found {:?}",
                        other.map(|o| o.1)
                    ),
                ))
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(lineno, format!("expected 6 fields, found {}", f.len())));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| bad(lineno, format!("bad number {s:?}: {e}")))
            };
            let int = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| bad(lineno, format!("bad integer {s:?}: {e}")))
            };
            rows.push(BenchRow {
                dataset: f[0].to_string(),
                workers: int(f[1])?,
                time_ms: num(f[2])?,
                iterations: int(f[3])?,
                cost: num(f[4])?,
                speedup: num(f[5])?,
            });
        }
        Ok(BenchReport { rows })
    }

    /// Per-dataset series keyed for plotting speedup and time against workers.
    pub fn plot_data(&self) -> PlotData {
        let series = self
            .datasets()
            .into_iter()
            .map(|label| {
                let rows: Vec<&BenchRow> = self.rows_for(label).collect();
                PlotSeries {
                    dataset: label.to_string(),
                    baseline_workers: self.baseline_workers(label).unwrap_or(0),
                    workers: rows.iter().map(|r| r.workers).collect(),
                    time_ms: rows.iter().map(|r| r.time_ms).collect(),
                    speedup: rows.iter().map(|r| r.speedup).collect(),
                    ideal_speedup: rows
                        .iter()
                        .map(|r| {
                            r.workers as f64 / self.baseline_workers(label).unwrap_or(1) as f64
                        })
                        .collect(),
                }
            })
            .collect();
        PlotData { series }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotSeries {
    pub dataset: String,
    pub baseline_workers: usize,
    pub workers: Vec<usize>,
    pub time_ms: Vec<f64>,
    pub speedup: Vec<f64>,
    pub ideal_speedup: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotData {
    pub series: Vec<PlotSeries>,
}

/// Writes `bench.csv` and the plot-ready `bench.json` into `dir`.
pub fn emit_report(report: &BenchReport, dir: &Path) -> Result<Vec<PathBuf>> {
    if report.rows.is_empty() {
        return Err(Error::InvalidInput("cannot emit an empty report".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("bench.csv");
    fs::write(&csv, report.to_csv()).map_err(|e| Error::io(&csv, e))?;
    let json = dir.join("bench.json");
    let body = serde_json::to_string_pretty(&report.plot_data())
        .map_err(|e| Error::InvalidInput(format!("cannot serialize plot data: {e}")))?;
    fs::write(&json, body).map_err(|e| Error::io(&json, e))?;
    Ok(vec![csv, json])
}

fn same_outcome(a: &ClusteringResult, b: &ClusteringResult) -> Option<String> {
    if a.medoids != b.medoids {
        return Some(format!(
            "medoids differ: {:?} vs {:?}",
            a.medoids.point_ids(),
            b.medoids.point_ids()
        ));
    }
    if a.assignment != b.assignment {
        return Some("assignments differ".into());
    }
    if a.iterations != b.iterations {
        return Some(format!(
            "iterations differ: {} vs {}",
            a.iterations, b.iterations
        ));
    }
    let bits = |r: &ClusteringResult| -> Vec<u64> {
        r.cost_trace.iter().map(|c| c.value().to_bits()).collect()
    };
    if bits(a) != bits(b) {
        return Some("cost traces differ".into());
    }
    None
}

/// Runs every cell of the plan sequentially.
pub fn run_benchmark(plan: &BenchPlan<'_>) -> Result<BenchReport> {
    plan.validate()?;
    let mut cells = Vec::new();
    for dataset in &plan.datasets {
        let mut reference: Option<(usize, ClusteringResult)> = None;
        for &workers in &plan.worker_counts {
            let mut config = plan.config;
            config.job.num_workers = workers;
            config.job.num_splits = workers;
            let mut times = Vec::with_capacity(plan.repetitions);
            let mut last = None;
            for _ in 0..plan.repetitions {
                let mut rng = SeededRng::new(plan.seed);
                let run = run_clustering_timed(dataset.points, plan.k, &mut rng, &config)?;
                times.push(run.clustering_ms);
                match &reference {
                    None => reference = Some((workers, run.result.clone())),
                    Some((ref_workers, expected)) => {
                        if let Some(detail) = same_outcome(expected, &run.result) {
                            return Err(Error::DeterminismGate {
                                dataset: dataset.label.to_string(),
                                detail: format!(
                                    "{workers} workers vs {ref_workers} workers: {detail}"
                                ),
                            });
                        }
                    }
                }
                last = Some(run.result);
            }
            let result = last.expect("repetitions >= 1");
            cells.push(BenchCell {
                dataset: dataset.label.to_string(),
                workers,
                time_ms: median(&times).expect("repetitions >= 1"),
                iterations: result.iterations,
                cost: result.final_cost().map_or(0.0, |c| c.value()),
            });
        }
    }
    BenchReport::from_cells(cells)
}
