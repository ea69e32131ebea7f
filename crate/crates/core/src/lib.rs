//! Parallel k-medoids++ clustering of spatial points on an in-process
//! MapReduce engine.
//!
//! * [`model`]: points, medoid sets, distances and the cost objective.
//! * [`seeding`]: weighted-probability initial medoids.
//! * [`engine`]: split / map / shuffle / reduce over a worker pool.
//! * [`job`]: the k-medoids map and reduce steps and the iterative driver.
//! * [`baselines`]: PAM, CLARANS, random-init k-medoids, exhaustive optimum.
//! * [`data_io`]: CSV ingestion, the row store, synthetic blobs.
//! * [`bench`]: the worker-scaling benchmark harness.

pub mod baselines;
pub mod bench;
pub mod data_io;
pub mod engine;
pub mod error;
pub mod job;
pub mod model;
pub mod rng;
pub mod seeding;

pub use error::{Error, Result};
pub use job::{run_clustering, ClusterConfig, ClusteringResult, InitMethod};
pub use model::{Assignment, CostMetric, CostValue, Medoid, MedoidSet, Point};
pub use rng::SeededRng;
