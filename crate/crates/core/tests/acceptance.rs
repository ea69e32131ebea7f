//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion fails. A criterion whose hardware precondition is not met is
//! still run in full and reported as UNVERIFIED together with its numbers.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use medoidsmr::baselines::{
    brute_force_optimum, kmedoids_random_init, pam, swap_delta, SwapProposal,
};
use medoidsmr::bench::{
    compute_speedup, median, run_benchmark, BenchPlan, BenchReport, NamedDataset,
};
use medoidsmr::data_io::{generate_blobs, BlobSpec};
use medoidsmr::engine::THREADS_ENV;
use medoidsmr::model::total_cost;
use medoidsmr::seeding::random_medoids;
use medoidsmr::seeding::{seed_next_medoid, SeedingState, SeedingWeight};
use medoidsmr::{
    run_clustering, Assignment, ClusterConfig, ClusteringResult, CostMetric, MedoidSet, Point,
    SeededRng,
};

enum Verdict {
    Pass,
    Fail,
    Unverified,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

impl Outcome {
    fn check(ok: bool, detail: String) -> Self {
        let verdict = if ok { Verdict::Pass } else { Verdict::Fail };
        Outcome { verdict, detail }
    }
}

fn uniform_points(rng: &mut SeededRng, n: usize) -> Vec<Point> {
    (0..n as u64)
        .map(|id| Point::new(id, [rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0)]))
        .collect()
}

fn cost_of(points: &[Point], medoids: &MedoidSet) -> f64 {
    let assignment = Assignment::nearest(points, medoids).unwrap();
    total_cost(points, medoids, &assignment).unwrap().value()
}

fn blobs(n: usize, centers: usize, seed: u64) -> Vec<Point> {
    generate_blobs(&BlobSpec::new(n, centers, seed))
        .unwrap()
        .points()
        .to_vec()
}

fn oracle_bound() -> Outcome {
    let (mut below, mut equal) = (0, 0);
    let instances = 200;
    for inst in 0..instances {
        let mut gen = SeededRng::new(10_000 + inst);
        let n = 1 + gen.index(12);
        let k = 1 + gen.index(n.min(3));
        let points = uniform_points(&mut gen, n);
        let res = run_clustering(
            &points,
            k,
            &mut SeededRng::new(inst),
            &ClusterConfig::default(),
        )
        .unwrap();
        let e = total_cost(&points, &res.medoids, &res.assignment)
            .unwrap()
            .value();
        let (_, opt) = brute_force_optimum(&points, k).unwrap();
        let opt = opt.value();
        if e < opt * (1.0 - 1e-12) {
            below += 1;
        }
        if (e - opt).abs() <= 1e-9 * opt.max(1e-300) {
            equal += 1;
        }
    }
    let frac = equal as f64 / instances as f64;
    Outcome::check(
        below == 0 && frac >= 0.6,
        format!(
            "{below} below optimum, {equal}/{instances} equal ({:.1}%, need >= 60%)",
            frac * 100.0
        ),
    )
}

fn swap_delta_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for inst in 0..100 {
        let mut rng = SeededRng::new(20_000 + inst);
        let n = 2 + rng.index(199);
        let k = 1 + rng.index((n - 1).min(8));
        let points = uniform_points(&mut rng, n);
        let medoids = random_medoids(&points, k, &mut rng).unwrap();
        let assignment = Assignment::nearest(&points, &medoids).unwrap();
        let before = total_cost(&points, &medoids, &assignment).unwrap().value();
        let ids = medoids.point_ids();
        let candidates: Vec<&Point> = points.iter().filter(|p| !ids.contains(&p.id)).collect();
        for _ in 0..50 {
            let out = medoids.medoids()[rng.index(k)].clone();
            let cand = candidates[rng.index(candidates.len())].clone();
            let swapped = medoids.with_replaced(out.cluster_id, cand.clone()).unwrap();
            let full = cost_of(&points, &swapped) - before;
            let proposal = SwapProposal {
                out_medoid: out,
                in_candidate: cand,
            };
            let delta = swap_delta(
                &proposal,
                &points,
                &medoids,
                &assignment,
                CostMetric::Squared,
            )
            .unwrap();
            // relative to the magnitude of the costs being differenced
            let scale = full.abs().max(before).max(f64::MIN_POSITIVE);
            worst = worst.max((delta - full).abs() / scale);
            checked += 1;
        }
    }
    Outcome::check(
        worst <= 1e-9,
        format!("{checked} proposals, worst relative error {worst:.3e} (tolerance 1e-9)"),
    )
}

fn seeding_distribution() -> Outcome {
    let points = vec![
        Point::new(0, [0.0, 0.0]),
        Point::new(1, [1.0, 0.0]),
        Point::new(2, [4.0, 0.0]),
    ];
    let draws = 10_000;
    let mut rng = SeededRng::new(3);
    let mut hits = 0;
    for _ in 0..draws {
        let mut state = SeedingState::starting_at(&points, SeedingWeight::D, 0).unwrap();
        if seed_next_medoid(&mut state, &mut rng).unwrap() == 2 {
            hits += 1;
        }
    }
    let freq = hits as f64 / draws as f64;
    Outcome::check(
        (freq - 0.8).abs() <= 0.012,
        format!("(4,0) chosen with frequency {freq:.4} (expected 0.8 +/- 0.012)"),
    )
}

fn monotone_and_terminating() -> Outcome {
    let (mut rising, mut capped, mut max_iter) = (0, 0, 0);
    for seed in 0..50 {
        let points = blobs(10_000, 8, seed);
        let res = run_clustering(
            &points,
            8,
            &mut SeededRng::new(seed),
            &ClusterConfig::default(),
        )
        .unwrap();
        if res
            .cost_trace
            .windows(2)
            .any(|w| w[1].value() > w[0].value())
        {
            rising += 1;
        }
        if !res.converged {
            capped += 1;
        }
        max_iter = max_iter.max(res.iterations);
    }
    Outcome::check(
        rising == 0 && capped == 0,
        format!("50 runs: {rising} traces rise, {capped} hit the cap, max {max_iter} iterations"),
    )
}

fn identical(a: &ClusteringResult, b: &ClusteringResult) -> bool {
    a.medoids == b.medoids
        && a.assignment == b.assignment
        && a.iterations == b.iterations
        && a.cost_trace.len() == b.cost_trace.len()
        && a.cost_trace
            .iter()
            .zip(&b.cost_trace)
            .all(|(x, y)| x.value().to_bits() == y.value().to_bits())
}

fn parallel_determinism() -> Outcome {
    let points = blobs(100_000, 16, 5);
    let runs: Vec<ClusteringResult> = [1, 2, 4, 8]
        .iter()
        .map(|&w| {
            run_clustering(
                &points,
                16,
                &mut SeededRng::new(5),
                &ClusterConfig::with_workers(w),
            )
            .unwrap()
        })
        .collect();
    let same = runs.iter().all(|r| identical(&runs[0], r));
    Outcome::check(
        same,
        format!(
            "workers 1/2/4/8 {} ({} iterations)",
            if same { "bit-identical" } else { "differ" },
            runs[0].iterations
        ),
    )
}

fn available_threads() -> usize {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok());
    cap.filter(|&c| c > 0).map_or(cores, |c| c.min(cores))
}

fn speedup_at(report: &BenchReport, dataset: &str, workers: usize) -> f64 {
    report
        .rows_for(dataset)
        .find(|r| r.workers == workers)
        .map_or(f64::NAN, |r| r.speedup)
}

fn scaling_trend() -> Outcome {
    let sizes = [200_000, 800_000, 2_000_000];
    let labels: Vec<String> = sizes.iter().map(|n| format!("blobs-{n}")).collect();
    let data: Vec<Vec<Point>> = sizes.iter().map(|&n| blobs(n, 16, 11)).collect();
    let plan = BenchPlan {
        datasets: labels
            .iter()
            .zip(&data)
            .map(|(label, points)| NamedDataset { label, points })
            .collect(),
        worker_counts: vec![1, 2, 4],
        k: 16,
        seed: 11,
        repetitions: 3,
        config: ClusterConfig::default(),
    };
    let report = match run_benchmark(&plan) {
        Ok(r) => r,
        Err(e) => return Outcome::check(false, format!("benchmark failed: {e}")),
    };
    let decreasing = labels.iter().all(|l| {
        let times: Vec<f64> = report.rows_for(l).map(|r| r.time_ms).collect();
        times.windows(2).all(|w| w[1] < w[0])
    });
    let s4: Vec<f64> = labels.iter().map(|l| speedup_at(&report, l, 4)).collect();
    let largest_ok = s4[2] >= 2.0;
    let trend_ok = s4.windows(2).all(|w| w[1] >= w[0]);
    let detail = format!(
        "speedup@4 = {:.3}/{:.3}/{:.3}; times decreasing: {decreasing}, largest >= 2.0: {largest_ok}, \
         non-decreasing in size: {trend_ok}; determinism gate held",
        s4[0], s4[1], s4[2]
    );
    let threads = available_threads();
    if threads < 4 {
        return Outcome {
            verdict: Verdict::Unverified,
            detail: format!("needs >= 4 cores, {threads} available; measured {detail}"),
        };
    }
    Outcome::check(decreasing && largest_ok && trend_ok, detail)
}

fn seeding_benefit() -> Outcome {
    let mut kmpp = Vec::new();
    let mut random = Vec::new();
    for seed in 0..50 {
        let points = blobs(20_000, 4, 100 + seed);
        let cfg = ClusterConfig::default();
        kmpp.push(
            run_clustering(&points, 4, &mut SeededRng::new(seed), &cfg)
                .unwrap()
                .iterations as f64,
        );
        random.push(
            kmedoids_random_init(&points, 4, &mut SeededRng::new(seed), &cfg)
                .unwrap()
                .iterations as f64,
        );
    }
    let (a, b) = (median(&kmpp).unwrap(), median(&random).unwrap());
    Outcome::check(
        a <= b,
        format!("median iterations k-medoids++ {a} vs random {b}"),
    )
}

fn speedup_arithmetic() -> Outcome {
    let a = compute_speedup(532_072.0, 399_054.0).unwrap();
    let b = compute_speedup(1_037_331.0, 747_987.0).unwrap();
    Outcome::check(
        (a - 1.333).abs() <= 1e-3 && (b - 1.387).abs() <= 1e-3,
        format!("{a:.4} and {b:.4}"),
    )
}

fn pam_swap_optimal() -> Outcome {
    let mut improvable = 0;
    let mut swaps = 0;
    for inst in 0..100 {
        let mut rng = SeededRng::new(30_000 + inst);
        let n = 2 + rng.index(9);
        let points = uniform_points(&mut rng, n);
        let res = pam(&points, 2, &mut rng, CostMetric::Squared).unwrap();
        let cost = cost_of(&points, &res.medoids);
        let ids = res.medoids.point_ids();
        let mut better = false;
        for m in res.medoids.iter() {
            for p in points.iter().filter(|p| !ids.contains(&p.id)) {
                swaps += 1;
                let swapped = res.medoids.with_replaced(m.cluster_id, p.clone()).unwrap();
                // a summation-order ulp is not an improvement
                better |= cost_of(&points, &swapped) < cost * (1.0 - 1e-12);
            }
        }
        improvable += usize::from(better);
    }
    Outcome::check(
        improvable == 0,
        format!("{improvable}/100 results admit an improving swap ({swaps} swaps checked)"),
    )
}

type Criterion = (&'static str, u64, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("oracle optimality bound", 60, oracle_bound),
        ("swap-delta equivalence", 60, swap_delta_equivalence),
        ("seeding distribution", 5, seeding_distribution),
        (
            "cost monotonicity and termination",
            120,
            monotone_and_terminating,
        ),
        ("parallel determinism", 180, parallel_determinism),
        ("scaling trend", 900, scaling_trend),
        ("seeding benefit", 180, seeding_benefit),
        ("speedup arithmetic", 1, speedup_arithmetic),
        ("PAM swap-optimality", 60, pam_swap_optimal),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let mut outcome = run();
        let took = started.elapsed();
        if took > Duration::from_secs(*budget) {
            outcome.verdict = match outcome.verdict {
                Verdict::Unverified => Verdict::Unverified,
                _ => Verdict::Fail,
            };
            outcome
                .detail
                .push_str(&format!("; over the {budget}s budget"));
        }
        let tag = match outcome.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                failed += 1;
                "FAIL"
            }
            Verdict::Unverified => "UNVERIFIED",
        };
        println!(
            "acceptance {}: {tag} {name}: {} [{:.2}s]",
            i + 1,
            outcome.detail,
            took.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
