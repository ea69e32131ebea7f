//! Serial reference algorithms: PAM, CLARANS, random-init k-medoids and an
//! exhaustive optimum.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::job::{check_k, run_clustering, ClusterConfig, ClusteringResult, InitMethod};
use crate::model::{total_cost_with, Assignment, CostMetric, CostValue, Medoid, MedoidSet, Point};
use crate::rng::SeededRng;
use crate::seeding::random_medoids;

/// Largest number of medoid subsets [`brute_force_optimum`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Replace medoid `out_medoid` by the non-medoid `in_candidate`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapProposal {
    pub out_medoid: Medoid,
    pub in_candidate: Point,
}

/// Which of the four swap cases a point falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwapCase {
    /// Belonged to the removed medoid, moves to another existing medoid.
    LosesToOther,
    /// Belonged to the removed medoid, moves to the candidate.
    LosesToCandidate,
    /// Belonged to another medoid and stays.
    Stays,
    /// Belonged to another medoid, moves to the candidate.
    MovesToCandidate,
}

/// Effect of a swap on one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMove {
    pub case: SwapCase,
    /// Cluster id after the swap; the candidate inherits the removed medoid's id.
    pub label: u32,
    pub before: f64,
    pub after: f64,
}

/// Classifies every point under `proposal`. `assignment` must be the
/// nearest-medoid assignment for `medoids`.
pub fn classify_swap(
    proposal: &SwapProposal,
    points: &[Point],
    medoids: &MedoidSet,
    assignment: &Assignment,
    metric: CostMetric,
) -> Result<Vec<PointMove>> {
    let out = proposal.out_medoid.cluster_id;
    match medoids.get(out) {
        Some(m) if m.point.id == proposal.out_medoid.point.id => {}
        _ => {
            return Err(Error::InvalidInput(format!(
                "point {} is not the medoid of cluster {out}",
                proposal.out_medoid.point.id
            )))
        }
    }
    if medoids
        .iter()
        .any(|m| m.point.id == proposal.in_candidate.id)
    {
        return Err(Error::InvalidInput(format!(
            "candidate {} is already a medoid",
            proposal.in_candidate.id
        )));
    }
    if assignment.len() != points.len() {
        return Err(Error::InvalidInput(format!(
            "assignment covers {} of {} points",
            assignment.len(),
            points.len()
        )));
    }
    if proposal.in_candidate.dim() != medoids.dim() {
        return Err(Error::DimensionMismatch {
            expected: medoids.dim(),
            found: proposal.in_candidate.dim(),
        });
    }
    let cand = &proposal.in_candidate.coords;
    points
        .iter()
        .zip(&assignment.labels)
        .map(|(p, &label)| {
            let own = medoids
                .get(label)
                .ok_or_else(|| Error::InvalidInput(format!("unknown label {label}")))?;
            let before = metric.term(&p.coords, &own.point.coords);
            let d_cand = metric.term(&p.coords, cand);
            let mv = if label == out {
                let (other, d_other) = medoids
                    .iter()
                    .filter(|m| m.cluster_id != out)
                    .map(|m| (m.cluster_id, metric.term(&p.coords, &m.point.coords)))
                    .fold((u32::MAX, f64::INFINITY), |best, c| {
                        if c.1 < best.1 {
                            c
                        } else {
                            best
                        }
                    });
                // ties favour the lower cluster id
                if d_other < d_cand || (d_other == d_cand && other < out) {
                    PointMove {
                        case: SwapCase::LosesToOther,
                        label: other,
                        before,
                        after: d_other,
                    }
                } else {
                    PointMove {
                        case: SwapCase::LosesToCandidate,
                        label: out,
                        before,
                        after: d_cand,
                    }
                }
            } else if before < d_cand || (before == d_cand && label < out) {
                PointMove {
                    case: SwapCase::Stays,
                    label,
                    before,
                    after: before,
                }
            } else {
                PointMove {
                    case: SwapCase::MovesToCandidate,
                    label: out,
                    before,
                    after: d_cand,
                }
            };
            Ok(mv)
        })
        .collect()
}

/// Change in total cost if `proposal` is applied and every point then moves
/// to its nearest medoid, summed over the four cases of [`classify_swap`].
pub fn swap_delta(
    proposal: &SwapProposal,
    points: &[Point],
    medoids: &MedoidSet,
    assignment: &Assignment,
    metric: CostMetric,
) -> Result<f64> {
    Ok(
        classify_swap(proposal, points, medoids, assignment, metric)?
            .iter()
            .map(|m| m.after - m.before)
            .sum(),
    )
}

/// Nearest and second-nearest medoid costs per point, for repeated swap evaluation.
struct SwapContext {
    label: Vec<u32>,
    nearest: Vec<f64>,
    second: Vec<f64>,
}

impl SwapContext {
    fn new(points: &[Point], medoids: &MedoidSet, metric: CostMetric) -> Self {
        let n = points.len();
        let mut ctx = SwapContext {
            label: Vec::with_capacity(n),
            nearest: Vec::with_capacity(n),
            second: Vec::with_capacity(n),
        };
        for p in points {
            let mut best = (u32::MAX, f64::INFINITY);
            let mut second = f64::INFINITY;
            for m in medoids.iter() {
                let d = metric.term(&p.coords, &m.point.coords);
                if d < best.1 {
                    second = best.1;
                    best = (m.cluster_id, d);
                } else if d < second {
                    second = d;
                }
            }
            ctx.label.push(best.0);
            ctx.nearest.push(best.1);
            ctx.second.push(second);
        }
        ctx
    }

    fn cost(&self) -> f64 {
        self.nearest.iter().sum()
    }

    fn delta(&self, points: &[Point], out: u32, cand: &[f64], metric: CostMetric) -> f64 {
        let mut delta = 0.0;
        for (i, p) in points.iter().enumerate() {
            let d_cand = metric.term(&p.coords, cand);
            let after = if self.label[i] == out {
                self.second[i].min(d_cand)
            } else {
                self.nearest[i].min(d_cand)
            };
            delta += after - self.nearest[i];
        }
        delta
    }

    fn assignment(&self) -> Assignment {
        Assignment {
            labels: self.label.clone(),
        }
    }
}

/// Classical PAM: random start, then apply the best strictly improving swap
/// until none is left.
pub fn pam(
    points: &[Point],
    k: usize,
    rng: &mut SeededRng,
    metric: CostMetric,
) -> Result<ClusteringResult> {
    check_k(points, k)?;
    let mut medoids = random_medoids(points, k, rng)?;
    let mut ctx = SwapContext::new(points, &medoids, metric);
    let mut cost = ctx.cost();
    let mut trace = vec![CostValue::new(cost)?];

    loop {
        let is_medoid = medoid_mask(points, &medoids);
        let mut best: Option<(f64, u32, usize)> = None;
        for m in medoids.iter() {
            for (j, p) in points.iter().enumerate() {
                if is_medoid[j] {
                    continue;
                }
                let d = ctx.delta(points, m.cluster_id, &p.coords, metric);
                if d < best.map_or(0.0, |b| b.0) {
                    best = Some((d, m.cluster_id, j));
                }
            }
        }
        let Some((_, out, j)) = best else { break };
        let next = medoids.with_replaced(out, points[j].clone())?;
        let next_ctx = SwapContext::new(points, &next, metric);
        let next_cost = next_ctx.cost();
        if !(next_cost < cost) {
            // improvement lost to rounding
            break;
        }
        medoids = next;
        ctx = next_ctx;
        cost = next_cost;
        trace.push(CostValue::new(cost)?);
    }

    let iterations = trace.len();
    Ok(ClusteringResult {
        medoids,
        assignment: ctx.assignment(),
        cost_trace: trace,
        iterations,
        converged: true,
    })
}

fn medoid_mask(points: &[Point], medoids: &MedoidSet) -> Vec<bool> {
    let ids = medoids.point_ids();
    points.iter().map(|p| ids.contains(&p.id)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClaransParams {
    pub numlocal: usize,
    pub maxneighbor: usize,
}

impl ClaransParams {
    /// `numlocal = 2`, `maxneighbor = max(250, 1.25% of k·(n−k))`.
    pub fn defaults_for(n: usize, k: usize) -> Self {
        let neighbors = k.saturating_mul(n.saturating_sub(k)) as f64;
        ClaransParams {
            numlocal: 2,
            maxneighbor: 250.max((0.0125 * neighbors).ceil() as usize),
        }
    }
}

/// CLARANS: `numlocal` randomized descents, each examining up to
/// `maxneighbor` single-swap neighbours (drawn without replacement) before
/// declaring a local minimum. Returns the cheapest descent.
pub fn clarans(
    points: &[Point],
    k: usize,
    params: ClaransParams,
    rng: &mut SeededRng,
    metric: CostMetric,
) -> Result<ClusteringResult> {
    check_k(points, k)?;
    if params.numlocal < 1 || params.maxneighbor < 1 {
        return Err(Error::InvalidInput(
            "numlocal and maxneighbor must be at least 1".into(),
        ));
    }
    let mut best: Option<ClusteringResult> = None;
    for _ in 0..params.numlocal {
        let run = clarans_descent(points, k, params.maxneighbor, rng, metric)?;
        let better = match &best {
            None => true,
            Some(b) => run.final_cost() < b.final_cost(),
        };
        if better {
            best = Some(run);
        }
    }
    best.ok_or_else(|| Error::Invariant("no CLARANS descent ran".into()))
}

fn clarans_descent(
    points: &[Point],
    k: usize,
    maxneighbor: usize,
    rng: &mut SeededRng,
    metric: CostMetric,
) -> Result<ClusteringResult> {
    let n = points.len();
    let mut medoids = random_medoids(points, k, rng)?;
    let mut ctx = SwapContext::new(points, &medoids, metric);
    let mut cost = ctx.cost();
    let mut trace = vec![CostValue::new(cost)?];

    'descent: loop {
        let is_medoid = medoid_mask(points, &medoids);
        let non_medoids: Vec<usize> = (0..n).filter(|&j| !is_medoid[j]).collect();
        // neighbour index encodes (cluster, non-medoid)
        let mut neighbors: Vec<usize> = (0..k * non_medoids.len()).collect();
        let mut remaining = neighbors.len();
        let mut examined = 0;
        while examined < maxneighbor && remaining > 0 {
            let pick = rng.index(remaining);
            let code = neighbors[pick];
            neighbors.swap(pick, remaining - 1);
            remaining -= 1;
            examined += 1;

            let out = (code / non_medoids.len()) as u32;
            let j = non_medoids[code % non_medoids.len()];
            if ctx.delta(points, out, &points[j].coords, metric) < 0.0 {
                let next = medoids.with_replaced(out, points[j].clone())?;
                let next_ctx = SwapContext::new(points, &next, metric);
                let next_cost = next_ctx.cost();
                if next_cost < cost {
                    medoids = next;
                    ctx = next_ctx;
                    cost = next_cost;
                    trace.push(CostValue::new(cost)?);
                    continue 'descent;
                }
            }
        }
        break;
    }

    let iterations = trace.len();
    Ok(ClusteringResult {
        medoids,
        assignment: ctx.assignment(),
        cost_trace: trace,
        iterations,
        converged: true,
    })
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > BRUTE_FORCE_LIMIT * 1_000 {
            return acc;
        }
    }
    acc
}

/// Global optimum of the squared-distance objective by enumerating every
/// k-subset of points. Ties go to the lexicographically smallest id set.
pub fn brute_force_optimum(points: &[Point], k: usize) -> Result<(MedoidSet, CostValue)> {
    brute_force_optimum_with(points, k, CostMetric::Squared)
}

pub fn brute_force_optimum_with(
    points: &[Point],
    k: usize,
    metric: CostMetric,
) -> Result<(MedoidSet, CostValue)> {
    check_k(points, k)?;
    let n = points.len();
    let subsets = binomial(n, k);
    if subsets > BRUTE_FORCE_LIMIT {
        return Err(Error::Capacity(format!(
            "C({n}, {k}) = {subsets} medoid subsets exceeds the limit of {BRUTE_FORCE_LIMIT}"
        )));
    }
    let mut by_id: Vec<usize> = (0..n).collect();
    by_id.sort_by_key(|&i| points[i].id);

    let mut best: Option<(f64, Vec<usize>)> = None;
    for subset in by_id.iter().copied().combinations(k) {
        let cost: f64 = points
            .iter()
            .map(|p| {
                subset
                    .iter()
                    .map(|&m| metric.term(&p.coords, &points[m].coords))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        if best.as_ref().is_none_or(|b| cost < b.0) {
            best = Some((cost, subset));
        }
    }
    let (cost, subset) = best.ok_or_else(|| Error::Invariant("no subset enumerated".into()))?;
    let medoids = MedoidSet::from_points(subset.iter().map(|&i| points[i].clone()).collect())?;
    // the reported cost is the objective of the nearest assignment
    let assignment = Assignment::nearest(points, &medoids)?;
    let reported = total_cost_with(metric, points, &medoids, &assignment)?;
    debug_assert!((reported.value() - cost).abs() <= 1e-9 * cost.max(1.0));
    Ok((medoids, reported))
}

/// The MapReduce driver started from uniformly random medoids.
pub fn kmedoids_random_init(
    points: &[Point],
    k: usize,
    rng: &mut SeededRng,
    config: &ClusterConfig,
) -> Result<ClusteringResult> {
    let config = ClusterConfig {
        init: InitMethod::Random,
        ..*config
    };
    run_clustering(points, k, rng, &config)
}
