use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use medoidsmr::baselines::{
    brute_force_optimum_with, clarans, kmedoids_random_init, pam, ClaransParams,
};
use medoidsmr::bench::{emit_report, run_benchmark, BenchPlan, NamedDataset};
use medoidsmr::data_io::{generate_blobs, ingest_csv, BlobSpec, RowStore};
use medoidsmr::engine::JobConfig;
use medoidsmr::job::run_clustering_timed;
use medoidsmr::seeding::SeedingWeight;
use medoidsmr::{ClusterConfig, ClusteringResult, CostMetric, InitMethod, SeededRng};

/// Parallel k-medoids++ clustering on an in-process MapReduce engine.
#[derive(Debug, Parser)]
#[command(name = "medoidsmr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic Gaussian-blob dataset as CSV.
    Gen(GenArgs),
    /// Cluster a CSV dataset and write medoids.csv, assignments.csv and trace.csv.
    Cluster(ClusterArgs),
    /// Run several algorithms on one dataset and print cost, iterations and time.
    Compare(CompareArgs),
    /// Measure wall time and speedup across worker counts.
    Bench(BenchArgs),
    /// Print the global optimum of a small instance by exhaustive search.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Number of points.
    #[arg(long)]
    n: usize,
    /// Number of blob centers.
    #[arg(long, default_value_t = 4)]
    centers: usize,
    /// Standard deviation of each blob.
    #[arg(long, default_value_t = 1.0)]
    stddev: f64,
    /// Range for center coordinates, as `lo,hi`.
    #[arg(long = "box", default_value = "-10,10", value_parser = parse_box)]
    center_box: (f64, f64),
    /// Dimension of the points.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Init {
    /// Weighted-probability (k-medoids++) seeding.
    Kmpp,
    /// Uniformly random distinct medoids.
    Random,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cost {
    Squared,
    Plain,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Weight {
    D,
    D2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algo {
    /// MapReduce k-medoids with k-medoids++ seeding.
    Kmpp,
    /// MapReduce k-medoids with random initial medoids.
    Kmedoids,
    /// Serial PAM.
    Pam,
    /// Serial CLARANS.
    Clarans,
}

/// Options shared by every subcommand that clusters.
#[derive(Debug, Args)]
struct Common {
    /// Number of clusters.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker count for the MapReduce engine.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    workers: u64,
    /// Iteration cap.
    #[arg(long = "max-iter", default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    max_iter: u64,
    /// Per-point cost term of the objective.
    #[arg(long, value_enum, default_value_t = Cost::Squared)]
    cost: Cost,
    /// Seeding weight: distance (d) or squared distance (d2).
    #[arg(long = "seeding-weight", value_enum, default_value_t = Weight::D)]
    seeding_weight: Weight,
}

impl Common {
    fn config(&self, init: InitMethod) -> ClusterConfig {
        let mut job = JobConfig::with_workers(self.workers as usize);
        job.max_iterations = self.max_iter as usize;
        ClusterConfig {
            job,
            init,
            metric: metric(self.cost),
            seeding_weight: match self.seeding_weight {
                Weight::D => SeedingWeight::D,
                Weight::D2 => SeedingWeight::D2,
            },
        }
    }
}

#[derive(Debug, Args)]
struct ClusterArgs {
    /// Input CSV (`x1,...,xd` or `id,x1,...,xd` per line).
    #[arg(long)]
    input: PathBuf,
    /// Dimension of the input points.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[command(flatten)]
    common: Common,
    /// Initialization method.
    #[arg(long, value_enum, default_value_t = Init::Kmpp)]
    init: Init,
    /// Directory for the result files.
    #[arg(long = "out-dir", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Input CSV (`x1,...,xd` or `id,x1,...,xd` per line).
    #[arg(long)]
    input: PathBuf,
    /// Dimension of the input points.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[command(flatten)]
    common: Common,
    /// Algorithms to run; repeat the flag for several. Defaults to all.
    #[arg(long, value_enum)]
    algo: Vec<Algo>,
    /// CLARANS restarts.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    numlocal: u64,
    /// CLARANS neighbours examined per local step [default: max(250, 1.25% of k(n-k))].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    maxneighbor: Option<u64>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Input CSV datasets; repeat the flag for several.
    #[arg(long)]
    input: Vec<PathBuf>,
    /// Dimension of the input points.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Generate blob datasets of these sizes instead of reading input files.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Blob centers for generated datasets [default: k].
    #[arg(long)]
    centers: Option<usize>,
    /// Blob standard deviation for generated datasets.
    #[arg(long, default_value_t = 1.0)]
    stddev: f64,
    /// Center range for generated datasets, as `lo,hi`.
    #[arg(long = "box", default_value = "-10,10", value_parser = parse_box)]
    center_box: (f64, f64),
    /// Worker counts to measure, comma separated.
    #[arg(long = "worker-counts", value_delimiter = ',', default_value = "1,2,4")]
    worker_counts: Vec<usize>,
    /// Number of clusters.
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Repetitions per cell; the median time is reported.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
    /// Iteration cap.
    #[arg(long = "max-iter", default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    max_iter: u64,
    /// Directory for bench.csv and bench.json.
    #[arg(long = "out-dir", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct OracleArgs {
    /// Input CSV (`x1,...,xd` or `id,x1,...,xd` per line).
    #[arg(long)]
    input: PathBuf,
    /// Dimension of the input points.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Number of clusters.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    /// Per-point cost term of the objective.
    #[arg(long, value_enum, default_value_t = Cost::Squared)]
    cost: Cost,
}

fn parse_box(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected lo,hi but got {s:?}"))?;
    let lo: f64 = lo
        .trim()
        .parse()
        .map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .map_err(|e| format!("bad upper bound: {e}"))?;
    if !(lo <= hi) {
        return Err(format!("lower bound {lo} exceeds upper bound {hi}"));
    }
    Ok((lo, hi))
}

fn metric(c: Cost) -> CostMetric {
    match c {
        Cost::Squared => CostMetric::Squared,
        Cost::Plain => CostMetric::Plain,
    }
}

fn load(path: &Path, dim: usize) -> Result<RowStore> {
    let store = ingest_csv(path, dim)?;
    if store.row_count() == 0 {
        bail!("{}: dataset is empty", path.display());
    }
    Ok(store)
}

fn gen(args: GenArgs) -> Result<()> {
    let spec = BlobSpec {
        n_points: args.n,
        n_centers: args.centers,
        center_box: args.center_box,
        stddev: args.stddev,
        dimension: args.dim,
        seed: args.seed,
    };
    let store = generate_blobs(&spec)?;
    store.write_csv(&args.out)?;
    println!(
        "wrote {} points to {}",
        store.row_count(),
        args.out.display()
    );
    Ok(())
}

fn cluster(args: ClusterArgs) -> Result<()> {
    let store = load(&args.input, args.dim)?;
    let init = match args.init {
        Init::Kmpp => InitMethod::KMedoidsPlusPlus,
        Init::Random => InitMethod::Random,
    };
    let config = args.common.config(init);
    let mut rng = SeededRng::new(args.common.seed);
    let run = run_clustering_timed(store.points(), args.common.k as usize, &mut rng, &config)?;
    run.result
        .write_files(store.points(), &args.out_dir)
        .with_context(|| format!("writing results to {}", args.out_dir.display()))?;
    let r = &run.result;
    println!(
        "k={} iterations={} converged={} cost={} seeding_ms={:.3} clustering_ms={:.3}",
        r.medoids.k(),
        r.iterations,
        r.converged,
        r.final_cost().map_or(0.0, |c| c.value()),
        run.seeding_ms,
        run.clustering_ms
    );
    let m = &run.job_metrics;
    println!(
        "map_ms={:.3} shuffle_ms={:.3} reduce_ms={:.3} workers={}",
        m.map_ms, m.shuffle_ms, m.reduce_ms, config.job.num_workers
    );
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let store = load(&args.input, args.dim)?;
    let points = store.points();
    let k = args.common.k as usize;
    let algos = if args.algo.is_empty() {
        vec![Algo::Kmpp, Algo::Kmedoids, Algo::Pam, Algo::Clarans]
    } else {
        args.algo.clone()
    };
    let cost = metric(args.common.cost);
    println!("algo,cost,iterations,time_ms");
    for algo in algos {
        let mut rng = SeededRng::new(args.common.seed);
        let started = Instant::now();
        let result: ClusteringResult = match algo {
            Algo::Kmpp => {
                run_clustering_timed(
                    points,
                    k,
                    &mut rng,
                    &args.common.config(InitMethod::KMedoidsPlusPlus),
                )?
                .result
            }
            Algo::Kmedoids => {
                kmedoids_random_init(points, k, &mut rng, &args.common.config(InitMethod::Random))?
            }
            Algo::Pam => pam(points, k, &mut rng, cost)?,
            Algo::Clarans => {
                let mut params = ClaransParams::defaults_for(points.len(), k);
                params.numlocal = args.numlocal as usize;
                if let Some(m) = args.maxneighbor {
                    params.maxneighbor = m as usize;
                }
                clarans(points, k, params, &mut rng, cost)?
            }
        };
        let ms = started.elapsed().as_secs_f64() * 1e3;
        let name = algo.to_possible_value().expect("no skipped variants");
        println!(
            "{},{},{},{:.3}",
            name.get_name(),
            result.final_cost().map_or(0.0, |c| c.value()),
            result.iterations,
            ms
        );
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let k = args.k as usize;
    let mut stores: Vec<(String, RowStore)> = Vec::new();
    for path in &args.input {
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().replace(',', "_"))
            .unwrap_or_else(|| "dataset".into());
        stores.push((label, load(path, args.dim)?));
    }
    for (i, &n) in args.sizes.iter().enumerate() {
        let spec = BlobSpec {
            n_points: n,
            n_centers: args.centers.unwrap_or(k),
            center_box: args.center_box,
            stddev: args.stddev,
            dimension: args.dim,
            seed: args.seed.wrapping_add(i as u64),
        };
        stores.push((format!("blobs{n}"), generate_blobs(&spec)?));
    }
    if stores.is_empty() {
        bail!("bench needs --input files or --sizes");
    }
    let mut config = ClusterConfig::default();
    config.job.max_iterations = args.max_iter as usize;
    let plan = BenchPlan {
        datasets: stores
            .iter()
            .map(|(label, s)| NamedDataset {
                label,
                points: s.points(),
            })
            .collect(),
        worker_counts: args.worker_counts.clone(),
        k,
        seed: args.seed,
        repetitions: args.reps as usize,
        config,
    };
    let report = run_benchmark(&plan)?;
    print!("{}", report.to_csv());
    for label in report.datasets() {
        if let Some(base) = report.baseline_workers(label) {
            eprintln!("{label}: speedup baseline is {base} worker(s)");
        }
    }
    for path in emit_report(&report, &args.out_dir)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn oracle(args: OracleArgs) -> Result<()> {
    let store = load(&args.input, args.dim)?;
    let (medoids, cost) =
        brute_force_optimum_with(store.points(), args.k as usize, metric(args.cost))?;
    println!("E={}", cost.value());
    let ids: Vec<String> = medoids.point_ids().iter().map(u64::to_string).collect();
    println!("medoids={}", ids.join(","));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Cluster(a) => cluster(a),
        Command::Compare(a) => compare(a),
        Command::Bench(a) => bench(a),
        Command::Oracle(a) => oracle(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
