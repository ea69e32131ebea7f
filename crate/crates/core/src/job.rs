//! The k-medoids MapReduce job and its iterative driver.
//!
//! Each iteration maps every point to its nearest medoid (keyed by cluster
//! id) and reduces every cluster to the member with the lowest within-cluster
//! cost. The loop stops when an iteration leaves every medoid in place.

use std::borrow::Borrow;
use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{make_splits, Engine, JobConfig, JobMetrics, KeyedRecord, MapReduceJob};
use crate::error::{Error, Result};
use crate::model::{
    nearest_index, sq_dist, validate_points, Assignment, CostMetric, CostValue, Medoid, MedoidSet,
    Point,
};
use crate::rng::SeededRng;
use crate::seeding::{initialize_medoids, random_medoids, SeedingWeight};

/// The medoids of one iteration, as shared read-only with every task.
#[derive(Debug, Clone, PartialEq)]
pub struct MedoidsFile {
    pub iteration: usize,
    pub medoids: MedoidSet,
}

impl MedoidsFile {
    pub fn new(iteration: usize, medoids: MedoidSet) -> Self {
        MedoidsFile { iteration, medoids }
    }

    /// Renders the on-disk form: `#iteration=<n>` then `cluster_id,point_id,x1,...,xd` lines.
    pub fn to_text(&self) -> String {
        let mut s = format!("#iteration={}\n", self.iteration);
        for m in self.medoids.iter() {
            let _ = write!(s, "{},{}", m.cluster_id, m.point.id);
            for c in &m.point.coords {
                let _ = write!(s, ",{c:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing #iteration header".into()))?;
        let iteration = header
            .strip_prefix("#iteration=")
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or_else(|| parse_err(1, format!("bad header {header:?}")))?;
        let mut medoids = Vec::new();
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let cluster_id = fields
                .next()
                .and_then(|f| f.trim().parse::<u32>().ok())
                .ok_or_else(|| parse_err(lineno, "bad cluster id".into()))?;
            let point_id = fields
                .next()
                .and_then(|f| f.trim().parse::<u64>().ok())
                .ok_or_else(|| parse_err(lineno, "bad point id".into()))?;
            let coords = fields
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| parse_err(lineno, format!("bad coordinate: {e}")))?;
            if coords.is_empty() {
                return Err(parse_err(lineno, "no coordinates".into()));
            }
            medoids.push(Medoid {
                cluster_id,
                point: Point::new(point_id, coords),
            });
        }
        Ok(MedoidsFile {
            iteration,
            medoids: MedoidSet::from_medoids(medoids)?,
        })
    }
}

fn check_row(row: &Point, dim: usize) -> Result<()> {
    if row.dim() != dim {
        return Err(Error::InvalidInput(format!(
            "row {} has {} coordinates, medoids have {}",
            row.id,
            row.dim(),
            dim
        )));
    }
    if !row.is_finite() {
        return Err(Error::InvalidInput(format!(
            "row {} has a non-finite coordinate",
            row.id
        )));
    }
    Ok(())
}

/// Map step: key a point by the cluster id of its nearest medoid.
pub fn map_assign(row: &Point, snapshot: &MedoidsFile) -> Result<KeyedRecord<u32, Point>> {
    let medoids = &snapshot.medoids;
    check_row(row, medoids.dim())?;
    let (idx, _) = nearest_index(&row.coords, medoids.iter().map(|m| &m.point.coords[..]));
    Ok(KeyedRecord::new(
        medoids.medoids()[idx].cluster_id,
        row.clone(),
    ))
}

/// Outcome of reducing one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ReduceUpdate {
    pub medoid: Medoid,
    /// Within-cluster cost of the returned medoid.
    pub cost: f64,
    pub size: usize,
}

fn group_cost<P: Borrow<Point>>(metric: CostMetric, points: &[P], candidate: &[f64]) -> f64 {
    points
        .iter()
        .map(|q| metric.term(&q.borrow().coords, candidate))
        .sum()
}

/// Reduce step: pick the member of `points` (sorted by id) with the lowest
/// within-cluster cost. The current medoid is kept unless a candidate is
/// strictly cheaper; among equally cheap candidates the smallest id wins.
///
/// Under the squared metric the cost of candidate `c` over a group with mean
/// `μ` is `Σ|q − μ|² + m·|c − μ|²`, so candidates are ranked by their distance
/// to the mean in one pass. The winner is then confirmed against the
/// incumbent with directly summed costs, so a replacement always lowers the
/// summed cost. The plain metric has no such identity and is enumerated.
pub fn reduce_update<P: Borrow<Point>>(
    cluster_id: u32,
    points: &[P],
    snapshot: &MedoidsFile,
    metric: CostMetric,
) -> Result<ReduceUpdate> {
    let incumbent = snapshot
        .medoids
        .get(cluster_id)
        .ok_or_else(|| Error::InvalidInput(format!("no medoid for cluster {cluster_id}")))?;
    if points.is_empty() {
        return Err(Error::Invariant(format!(
            "cluster {cluster_id} has an empty reduce group"
        )));
    }
    let best = match metric {
        CostMetric::Squared => best_by_mean(points, &incumbent.point),
        CostMetric::Plain => best_by_enumeration(metric, points, &incumbent.point),
    };
    let incumbent_cost = group_cost(metric, points, &incumbent.point.coords);
    let (point, cost) = match best {
        Some(candidate) => {
            let cost = group_cost(metric, points, &candidate.coords);
            if cost < incumbent_cost {
                (candidate.clone(), cost)
            } else {
                (incumbent.point.clone(), incumbent_cost)
            }
        }
        None => (incumbent.point.clone(), incumbent_cost),
    };
    Ok(ReduceUpdate {
        medoid: Medoid { cluster_id, point },
        cost,
        size: points.len(),
    })
}

/// Best challenger by distance to the group mean, or `None` if the incumbent ranks first.
fn best_by_mean<'p, P: Borrow<Point>>(points: &'p [P], incumbent: &Point) -> Option<&'p Point> {
    let dim = incumbent.dim();
    let mut mean = vec![0.0; dim];
    for q in points {
        for (m, c) in mean.iter_mut().zip(&q.borrow().coords) {
            *m += c;
        }
    }
    let m = points.len() as f64;
    mean.iter_mut().for_each(|v| *v /= m);

    let mut best_key = sq_dist(&incumbent.coords, &mean);
    let mut best = None;
    for q in points {
        let q = q.borrow();
        if q.id == incumbent.id {
            continue;
        }
        let key = sq_dist(&q.coords, &mean);
        if key < best_key {
            best_key = key;
            best = Some(q);
        }
    }
    best
}

fn best_by_enumeration<'p, P: Borrow<Point>>(
    metric: CostMetric,
    points: &'p [P],
    incumbent: &Point,
) -> Option<&'p Point> {
    let mut best_cost = group_cost(metric, points, &incumbent.coords);
    let mut best = None;
    for q in points {
        let q = q.borrow();
        if q.id == incumbent.id {
            continue;
        }
        let cost = group_cost(metric, points, &q.coords);
        if cost < best_cost {
            best_cost = cost;
            best = Some(q);
        }
    }
    best
}

/// True when both files hold the same medoid point id for every cluster.
pub fn has_converged(prev: &MedoidsFile, next: &MedoidsFile) -> Result<bool> {
    if prev.medoids.k() != next.medoids.k() {
        return Err(Error::InvalidInput(format!(
            "cannot compare medoid files with k = {} and k = {}",
            prev.medoids.k(),
            next.medoids.k()
        )));
    }
    Ok(prev.medoids.point_ids() == next.medoids.point_ids())
}

/// One assignment/update round as a MapReduce job. Emitted values borrow
/// the input rows, so the shuffle moves references rather than coordinates.
pub struct KMedoidsJob<'s> {
    snapshot: &'s MedoidsFile,
    metric: CostMetric,
    // medoid coordinates laid out contiguously, in cluster order
    flat: Vec<f64>,
}

impl<'s> KMedoidsJob<'s> {
    pub fn new(snapshot: &'s MedoidsFile, metric: CostMetric) -> Self {
        let flat = snapshot
            .medoids
            .iter()
            .flat_map(|m| m.point.coords.iter().copied())
            .collect();
        KMedoidsJob {
            snapshot,
            metric,
            flat,
        }
    }

    pub fn snapshot(&self) -> &MedoidsFile {
        self.snapshot
    }
}

impl<'a> MapReduceJob<'a> for KMedoidsJob<'_> {
    type Input = Point;
    type Key = u32;
    type Value = &'a Point;
    type Output = ReduceUpdate;

    fn map(
        &self,
        row: &'a Point,
        out: &mut Vec<KeyedRecord<u32, &'a Point>>,
    ) -> std::result::Result<(), String> {
        let medoids = &self.snapshot.medoids;
        check_row(row, medoids.dim()).map_err(|e| e.to_string())?;
        let (idx, _) = nearest_index(&row.coords, self.flat.chunks_exact(medoids.dim()));
        out.push(KeyedRecord::new(medoids.medoids()[idx].cluster_id, row));
        Ok(())
    }

    fn value_order(&self, a: &&'a Point, b: &&'a Point) -> Ordering {
        a.id.cmp(&b.id)
    }

    fn reduce(
        &self,
        key: &u32,
        values: Vec<&'a Point>,
    ) -> std::result::Result<Vec<ReduceUpdate>, String> {
        reduce_update(*key, &values, self.snapshot, self.metric)
            .map(|u| vec![u])
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum InitMethod {
    /// Weighted-probability seeding.
    #[default]
    KMedoidsPlusPlus,
    /// Uniformly random distinct medoids.
    Random,
}

impl FromStr for InitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmpp" => Ok(InitMethod::KMedoidsPlusPlus),
            "random" => Ok(InitMethod::Random),
            other => Err(Error::InvalidInput(format!(
                "unknown init method {other:?} (expected kmpp|random)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ClusterConfig {
    pub job: JobConfig,
    pub init: InitMethod,
    pub metric: CostMetric,
    pub seeding_weight: SeedingWeight,
}

impl ClusterConfig {
    pub fn with_workers(num_workers: usize) -> Self {
        ClusterConfig {
            job: JobConfig::with_workers(num_workers),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub medoids: MedoidSet,
    pub assignment: Assignment,
    /// Cost after each iteration.
    pub cost_trace: Vec<CostValue>,
    pub iterations: usize,
    /// False iff the iteration cap was hit.
    pub converged: bool,
}

impl ClusteringResult {
    pub fn final_cost(&self) -> Option<CostValue> {
        self.cost_trace.last().copied()
    }

    /// Writes `medoids.csv`, `assignments.csv` and `trace.csv` into `dir`.
    pub fn write_files(&self, points: &[Point], dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        MedoidsFile::new(self.iterations, self.medoids.clone()).write(&dir.join("medoids.csv"))?;

        let mut assignments = String::with_capacity(points.len() * 8);
        for (p, label) in points.iter().zip(&self.assignment.labels) {
            let _ = writeln!(assignments, "{},{}", p.id, label);
        }
        let path = dir.join("assignments.csv");
        fs::write(&path, assignments).map_err(|e| Error::io(&path, e))?;

        let mut trace = String::new();
        for (i, c) in self.cost_trace.iter().enumerate() {
            let _ = writeln!(trace, "{},{:?}", i + 1, c.value());
        }
        let path = dir.join("trace.csv");
        fs::write(&path, trace).map_err(|e| Error::io(&path, e))
    }
}

/// A clustering result with its timings.
#[derive(Debug, Clone)]
pub struct ClusteringRun {
    pub result: ClusteringResult,
    pub seeding_ms: f64,
    /// Iterative job, including the final assignment pass.
    pub clustering_ms: f64,
    pub job_metrics: JobMetrics,
}

pub(crate) fn check_k(points: &[Point], k: usize) -> Result<()> {
    validate_points(points)?;
    if points.is_empty() {
        return Err(Error::InvalidInput(
            "cannot cluster an empty dataset".into(),
        ));
    }
    if k < 1 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if k > points.len() {
        return Err(Error::DegenerateDataset(format!(
            "k = {k} exceeds the {} points",
            points.len()
        )));
    }
    Ok(())
}

/// Seeds, then iterates the MapReduce job until the medoids stop moving.
pub fn run_clustering(
    points: &[Point],
    k: usize,
    rng: &mut SeededRng,
    config: &ClusterConfig,
) -> Result<ClusteringResult> {
    run_clustering_timed(points, k, rng, config).map(|run| run.result)
}

pub fn run_clustering_timed(
    points: &[Point],
    k: usize,
    rng: &mut SeededRng,
    config: &ClusterConfig,
) -> Result<ClusteringRun> {
    config.job.validate()?;
    check_k(points, k)?;

    let seeding_started = Instant::now();
    let initial = match config.init {
        InitMethod::KMedoidsPlusPlus => initialize_medoids(points, k, config.seeding_weight, rng)?,
        InitMethod::Random => random_medoids(points, k, rng)?,
    };
    let seeding_ms = seeding_started.elapsed().as_secs_f64() * 1e3;

    let started = Instant::now();
    let engine = Engine::new(config.job.num_workers)?;
    let (result, job_metrics) = iterate_from(points, initial, &engine, config)?;
    Ok(ClusteringRun {
        result,
        seeding_ms,
        clustering_ms: started.elapsed().as_secs_f64() * 1e3,
        job_metrics,
    })
}

/// Runs the iterative job from the given initial medoids.
pub fn iterate_from(
    points: &[Point],
    initial: MedoidSet,
    engine: &Engine,
    config: &ClusterConfig,
) -> Result<(ClusteringResult, JobMetrics)> {
    config.job.validate()?;
    check_k(points, initial.k())?;
    let k = initial.k();
    let splits = make_splits(points.len(), config.job.num_splits);
    let mut snapshot = MedoidsFile::new(0, initial);
    let mut cost_trace = Vec::new();
    let mut metrics = JobMetrics::default();
    let mut converged = false;

    for iteration in 1..=config.job.max_iterations {
        let job = KMedoidsJob::new(&snapshot, config.metric);
        let out = engine.run_job(&job, points, &splits)?;
        metrics += out.metrics;

        let mut next = Vec::with_capacity(k);
        let mut cost = 0.0;
        for cluster_id in 0..k as u32 {
            let update = out
                .groups
                .get(&cluster_id)
                .and_then(|v| v.first())
                .ok_or_else(|| {
                    Error::Invariant(format!("cluster {cluster_id} received no points"))
                })?;
            cost += update.cost;
            next.push(update.medoid.clone());
        }
        let next = MedoidsFile::new(iteration, MedoidSet::from_medoids(next)?);
        cost_trace.push(CostValue::new(cost)?);
        let done = has_converged(&snapshot, &next)?;
        snapshot = next;
        if done {
            converged = true;
            break;
        }
    }

    let medoids = snapshot.medoids;
    let assignment = engine.install(|| parallel_assignment(points, &medoids));
    let iterations = cost_trace.len();
    Ok((
        ClusteringResult {
            medoids,
            assignment,
            cost_trace,
            iterations,
            converged,
        },
        metrics,
    ))
}

fn parallel_assignment(points: &[Point], medoids: &MedoidSet) -> Assignment {
    let labels = points
        .par_iter()
        .map(|p| {
            let (idx, _) = nearest_index(&p.coords, medoids.iter().map(|m| &m.point.coords[..]));
            medoids.medoids()[idx].cluster_id
        })
        .collect();
    Assignment { labels }
}
