//! In-process MapReduce execution.
//!
//! A job is split into contiguous row ranges, each mapped by one task on a
//! worker pool. Emitted records are grouped by key, each group's values are
//! sorted by the job's value ordering, and one reduce task runs per key.
//! Because every group is canonicalized before reduction, the output does not
//! depend on the worker count, the split count, or task completion order, as
//! long as the value ordering is total.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Environment variable capping the number of OS threads the engine uses.
pub const THREADS_ENV: &str = "MEDOIDSMR_THREADS";

/// A contiguous range of input rows handled by one map task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputSplit {
    pub split_id: usize,
    pub rows: Range<usize>,
}

impl InputSplit {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Partitions `0..row_count` into `num_splits` contiguous ranges whose sizes
/// differ by at most one; the longer ranges come first.
pub fn make_splits(row_count: usize, num_splits: usize) -> Vec<InputSplit> {
    let num_splits = num_splits.max(1);
    let base = row_count / num_splits;
    let extra = row_count % num_splits;
    let mut start = 0;
    (0..num_splits)
        .map(|split_id| {
            let len = base + usize::from(split_id < extra);
            let rows = start..start + len;
            start += len;
            InputSplit { split_id, rows }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyedRecord<K, V> {
    pub key: K,
    pub value: V,
}

impl<K, V> KeyedRecord<K, V> {
    pub fn new(key: K, value: V) -> Self {
        KeyedRecord { key, value }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct JobConfig {
    /// Logical worker count, the stand-in for cluster nodes.
    pub num_workers: usize,
    pub num_splits: usize,
    /// Iteration cap for drivers that loop over jobs.
    pub max_iterations: usize,
}

impl JobConfig {
    pub const DEFAULT_MAX_ITERATIONS: usize = 100;

    /// One split per worker, default iteration cap.
    pub fn with_workers(num_workers: usize) -> Self {
        JobConfig {
            num_workers,
            num_splits: num_workers,
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_workers == 0 {
            return Err(Error::InvalidInput("num_workers must be at least 1".into()));
        }
        if self.num_splits == 0 {
            return Err(Error::InvalidInput("num_splits must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for JobConfig {
    fn default() -> Self {
        Self::with_workers(1)
    }
}

/// A map/reduce pair. Implementors carry their read-only shared context as
/// fields; both functions take `&self` and must not mutate it. Emitted values
/// may borrow from the input rows for `'a`.
pub trait MapReduceJob<'a>: Sync {
    type Input: Sync;
    type Key: Ord + Clone + Send + Sync + fmt::Debug;
    type Value: Send + Sync;
    type Output: Send;

    /// Maps one input row, pushing emitted records onto `out`.
    fn map(
        &self,
        row: &'a Self::Input,
        out: &mut Vec<KeyedRecord<Self::Key, Self::Value>>,
    ) -> std::result::Result<(), String>;

    /// Total order applied to the values of a group before reduction.
    fn value_order(&self, a: &Self::Value, b: &Self::Value) -> Ordering;

    fn reduce(
        &self,
        key: &Self::Key,
        values: Vec<Self::Value>,
    ) -> std::result::Result<Vec<Self::Output>, String>;
}

/// Wall-clock timings of one job, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct JobMetrics {
    pub map_ms: f64,
    pub shuffle_ms: f64,
    pub reduce_ms: f64,
    pub total_ms: f64,
    pub records: usize,
}

impl std::ops::AddAssign for JobMetrics {
    fn add_assign(&mut self, rhs: Self) {
        self.map_ms += rhs.map_ms;
        self.shuffle_ms += rhs.shuffle_ms;
        self.reduce_ms += rhs.reduce_ms;
        self.total_ms += rhs.total_ms;
        self.records += rhs.records;
    }
}

#[derive(Debug)]
pub struct JobOutput<K, O> {
    pub groups: BTreeMap<K, Vec<O>>,
    pub metrics: JobMetrics,
}

/// Groups records by key in ascending key order, sorting each group with `order`.
pub fn shuffle<K: Ord, V>(
    records: Vec<KeyedRecord<K, V>>,
    order: impl Fn(&V, &V) -> Ordering,
) -> BTreeMap<K, Vec<V>> {
    let mut groups: BTreeMap<K, Vec<V>> = BTreeMap::new();
    for r in records {
        groups.entry(r.key).or_default().push(r.value);
    }
    for values in groups.values_mut() {
        values.sort_by(&order);
    }
    groups
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// A worker pool sized by the logical worker count (capped by
/// [`THREADS_ENV`] when set).
pub struct Engine {
    pool: rayon::ThreadPool,
    workers: usize,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("workers", &self.workers)
            .field("threads", &self.pool.current_num_threads())
            .finish()
    }
}

impl Engine {
    pub fn new(num_workers: usize) -> Result<Self> {
        if num_workers == 0 {
            return Err(Error::InvalidInput("num_workers must be at least 1".into()));
        }
        let threads = thread_cap().map_or(num_workers, |cap| cap.min(num_workers));
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .thread_name(|i| format!("medoidsmr-worker-{i}"))
            .build()
            .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
        Ok(Engine {
            pool,
            workers: num_workers,
        })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Runs `f` inside the pool, so rayon iterators in it use the pool's threads.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    pub fn run_job<'a, J: MapReduceJob<'a>>(
        &self,
        job: &J,
        input: &'a [J::Input],
        splits: &[InputSplit],
    ) -> Result<JobOutput<J::Key, J::Output>> {
        for s in splits {
            if s.rows.end > input.len() || s.rows.start > s.rows.end {
                return Err(Error::InvalidInput(format!(
                    "split {} covers rows {:?} of {}",
                    s.split_id,
                    s.rows,
                    input.len()
                )));
            }
        }
        let started = Instant::now();

        // map: one task per split, each building key-partitioned buckets
        let mapped: Vec<Result<Buckets<J::Key, J::Value>>> = self.pool.install(|| {
            splits
                .par_iter()
                .map(|split| map_task(job, input, split))
                .collect()
        });
        let map_done = Instant::now();

        // barrier; merge buckets in split order
        let mut merged: BTreeMap<J::Key, Vec<Vec<J::Value>>> = BTreeMap::new();
        let mut records = 0;
        for buckets in mapped {
            for (key, values) in buckets? {
                records += values.len();
                merged.entry(key).or_default().push(values);
            }
        }
        let groups: Vec<_> = merged.into_iter().collect();
        let shuffle_done = Instant::now();

        // sort and reduce, one task per key
        let reduced: Vec<_> = self.pool.install(|| {
            groups
                .into_par_iter()
                .map(|(key, chunks)| {
                    let total = chunks.iter().map(Vec::len).sum();
                    let mut values = Vec::with_capacity(total);
                    for chunk in chunks {
                        values.extend(chunk);
                    }
                    values.sort_by(|a, b| job.value_order(a, b));
                    let out = job
                        .reduce(&key, values)
                        .map_err(|message| Error::ReduceFailed {
                            key: format!("{key:?}"),
                            message,
                        });
                    (key, out)
                })
                .collect()
        });
        let mut out = BTreeMap::new();
        for (key, result) in reduced {
            out.insert(key, result?);
        }
        let done = Instant::now();

        let ms = |a: Instant, b: Instant| (b - a).as_secs_f64() * 1e3;
        Ok(JobOutput {
            groups: out,
            metrics: JobMetrics {
                map_ms: ms(started, map_done),
                shuffle_ms: ms(map_done, shuffle_done),
                reduce_ms: ms(shuffle_done, done),
                total_ms: ms(started, done),
                records,
            },
        })
    }
}

type Buckets<K, V> = BTreeMap<K, Vec<V>>;

fn map_task<'a, J: MapReduceJob<'a>>(
    job: &J,
    input: &'a [J::Input],
    split: &InputSplit,
) -> Result<Buckets<J::Key, J::Value>> {
    let mut buckets: Buckets<J::Key, J::Value> = BTreeMap::new();
    let mut emitted = Vec::new();
    for row in &input[split.rows.clone()] {
        job.map(row, &mut emitted)
            .map_err(|message| Error::MapFailed {
                split_id: split.split_id,
                message,
            })?;
        for rec in emitted.drain(..) {
            match buckets.get_mut(&rec.key) {
                Some(values) => values.push(rec.value),
                None => {
                    buckets.insert(rec.key, vec![rec.value]);
                }
            }
        }
    }
    Ok(buckets)
}

/// Runs one job on a fresh pool sized by `config`.
pub fn run_job<'a, J: MapReduceJob<'a>>(
    job: &J,
    input: &'a [J::Input],
    splits: &[InputSplit],
    config: &JobConfig,
) -> Result<JobOutput<J::Key, J::Output>> {
    config.validate()?;
    Engine::new(config.num_workers)?.run_job(job, input, splits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_examples() {
        assert_eq!(
            make_splits(10, 1),
            vec![InputSplit {
                split_id: 0,
                rows: 0..10
            }]
        );
        let sizes: Vec<usize> = make_splits(10, 3).iter().map(InputSplit::len).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        let empty = make_splits(0, 3);
        assert_eq!(empty.len(), 3);
        assert!(empty.iter().all(InputSplit::is_empty));
    }

    #[test]
    fn splits_partition_rows() {
        for n in 0..40 {
            for s in 1..9 {
                let splits = make_splits(n, s);
                let mut next = 0;
                for (i, sp) in splits.iter().enumerate() {
                    assert_eq!(sp.split_id, i);
                    assert_eq!(sp.rows.start, next);
                    next = sp.rows.end;
                }
                assert_eq!(next, n);
                let max = splits.iter().map(InputSplit::len).max().unwrap();
                let min = splits.iter().map(InputSplit::len).min().unwrap();
                assert!(max - min <= 1);
            }
        }
    }

    #[test]
    fn shuffle_examples() {
        let empty: Vec<KeyedRecord<u32, &str>> = vec![];
        assert!(shuffle(empty, |a, b| a.cmp(b)).is_empty());

        let recs = vec![
            KeyedRecord::new(1, "c"),
            KeyedRecord::new(0, "b"),
            KeyedRecord::new(1, "a"),
        ];
        let g = shuffle(recs, |a, b| a.cmp(b));
        assert_eq!(g.keys().copied().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(g[&0], vec!["b"]);
        assert_eq!(g[&1], vec!["a", "c"]);

        let same: Vec<_> = (0..5).rev().map(|v| KeyedRecord::new(7u8, v)).collect();
        let g = shuffle(same, |a, b| a.cmp(b));
        assert_eq!(g.len(), 1);
        assert_eq!(g[&7], vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn config_validation() {
        assert!(JobConfig::with_workers(0).validate().is_err());
        let mut c = JobConfig::with_workers(2);
        assert!(c.validate().is_ok());
        c.num_splits = 0;
        assert!(c.validate().is_err());
        assert!(Engine::new(0).is_err());
    }
}
