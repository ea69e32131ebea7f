//! k-medoids++ initialization.
//!
//! The first medoid is drawn uniformly. Each following medoid is drawn with
//! probability proportional to the weight of a point, which is its distance
//! `D(p)` to the nearest medoid chosen so far (or `D(p)²` under
//! [`SeedingWeight::D2`]). A draw `R` uniform in `[0, S)` is located by
//! walking the cumulative weights in ascending point-id order over half-open
//! intervals, so already-chosen points (weight 0) can never be drawn again.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sq_dist, validate_points, MedoidSet, Point};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SeedingWeight {
    /// Weight by the plain distance `D(p)`.
    #[default]
    #[serde(rename = "d")]
    D,
    /// Weight by `D(p)²`, as in k-means++.
    #[serde(rename = "d2")]
    D2,
}

impl SeedingWeight {
    fn weight(self, d: f64) -> f64 {
        match self {
            SeedingWeight::D => d,
            SeedingWeight::D2 => d * d,
        }
    }
}

impl FromStr for SeedingWeight {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d" => Ok(SeedingWeight::D),
            "d2" => Ok(SeedingWeight::D2),
            other => Err(Error::InvalidInput(format!(
                "unknown seeding weight {other:?} (expected d|d2)"
            ))),
        }
    }
}

impl fmt::Display for SeedingWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeedingWeight::D => "d",
            SeedingWeight::D2 => "d2",
        })
    }
}

/// Partial seeding progress over a borrowed dataset.
#[derive(Debug, Clone)]
pub struct SeedingState<'a> {
    points: &'a [Point],
    /// Row positions in ascending point-id order.
    walk_order: Vec<usize>,
    weight: SeedingWeight,
    chosen: Vec<usize>,
    d_cache: Vec<f64>,
    s_total: f64,
}

impl<'a> SeedingState<'a> {
    /// Starts seeding with the medoid at row position `index`.
    pub fn starting_at(points: &'a [Point], weight: SeedingWeight, index: usize) -> Result<Self> {
        validate_points(points)?;
        if points.is_empty() {
            return Err(Error::InvalidInput("cannot seed an empty dataset".into()));
        }
        if index >= points.len() {
            return Err(Error::InvalidInput(format!(
                "row {index} out of range for {} points",
                points.len()
            )));
        }
        let mut walk_order: Vec<usize> = (0..points.len()).collect();
        if !points.windows(2).all(|w| w[0].id < w[1].id) {
            walk_order.sort_by_key(|&i| points[i].id);
        }
        let first = &points[index].coords;
        let d_cache: Vec<f64> = points
            .iter()
            .map(|p| sq_dist(&p.coords, first).sqrt())
            .collect();
        let mut state = SeedingState {
            points,
            walk_order,
            weight,
            chosen: vec![index],
            d_cache,
            s_total: 0.0,
        };
        state.s_total = state.sum_weights();
        Ok(state)
    }

    fn sum_weights(&self) -> f64 {
        self.walk_order
            .iter()
            .map(|&i| self.weight.weight(self.d_cache[i]))
            .sum()
    }

    /// Row positions of the chosen medoids, in selection order.
    pub fn chosen(&self) -> &[usize] {
        &self.chosen
    }

    /// Distance of every point to its nearest chosen medoid.
    pub fn d_cache(&self) -> &[f64] {
        &self.d_cache
    }

    /// Sum of the selection weights.
    pub fn s_total(&self) -> f64 {
        self.s_total
    }

    /// Locates `r` in the cumulative weights and returns the row position it selects.
    ///
    /// Returns `None` when all weights are zero.
    pub fn locate(&self, r: f64) -> Option<usize> {
        let mut cumulative = 0.0;
        let mut last_positive = None;
        for &i in &self.walk_order {
            let w = self.weight.weight(self.d_cache[i]);
            if w <= 0.0 {
                continue;
            }
            cumulative += w;
            last_positive = Some(i);
            if r < cumulative {
                return Some(i);
            }
        }
        // r rounded up to the total
        last_positive
    }

    /// Adds the point selected by draw `r` in `[0, S)`.
    pub fn select_with_draw(&mut self, r: f64) -> Result<usize> {
        if !(self.s_total > 0.0) {
            return Err(Error::DegenerateDataset(format!(
                "all points coincide with the {} chosen medoid(s); not enough distinct points",
                self.chosen.len()
            )));
        }
        let idx = self
            .locate(r)
            .ok_or_else(|| Error::Invariant("positive total weight but no candidate".into()))?;
        self.add(idx);
        Ok(idx)
    }

    fn add(&mut self, idx: usize) {
        let m = &self.points[idx].coords;
        for (d, p) in self.d_cache.iter_mut().zip(self.points) {
            let nd = sq_dist(&p.coords, m).sqrt();
            if nd < *d {
                *d = nd;
            }
        }
        // exact zero for the medoid itself
        self.d_cache[idx] = 0.0;
        self.chosen.push(idx);
        self.s_total = self.sum_weights();
    }

    pub fn into_medoid_set(self) -> Result<MedoidSet> {
        MedoidSet::from_points(
            self.chosen
                .iter()
                .map(|&i| self.points[i].clone())
                .collect(),
        )
    }
}

/// Picks the first medoid uniformly at random.
pub fn seed_first_medoid<'a>(
    points: &'a [Point],
    weight: SeedingWeight,
    rng: &mut SeededRng,
) -> Result<SeedingState<'a>> {
    if points.is_empty() {
        return Err(Error::InvalidInput("cannot seed an empty dataset".into()));
    }
    let idx = rng.index(points.len());
    SeedingState::starting_at(points, weight, idx)
}

/// Draws one more medoid; returns its row position.
pub fn seed_next_medoid(state: &mut SeedingState<'_>, rng: &mut SeededRng) -> Result<usize> {
    let r = rng.unit() * state.s_total;
    state.select_with_draw(r)
}

/// Chooses `k` initial medoids. Cluster ids follow selection order.
pub fn initialize_medoids(
    points: &[Point],
    k: usize,
    weight: SeedingWeight,
    rng: &mut SeededRng,
) -> Result<MedoidSet> {
    if k < 1 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if k > points.len() {
        return Err(Error::DegenerateDataset(format!(
            "k = {k} exceeds the {} available points",
            points.len()
        )));
    }
    let mut state = seed_first_medoid(points, weight, rng)?;
    while state.chosen().len() < k {
        seed_next_medoid(&mut state, rng)?;
    }
    state.into_medoid_set()
}

/// Draws `k` distinct medoids uniformly at random, skipping points whose
/// coordinates duplicate an already-drawn medoid.
pub fn random_medoids(points: &[Point], k: usize, rng: &mut SeededRng) -> Result<MedoidSet> {
    if k < 1 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    validate_points(points)?;
    let mut pool: Vec<usize> = (0..points.len()).collect();
    let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(k);
    let mut chosen = Vec::with_capacity(k);
    let mut remaining = pool.len();
    while chosen.len() < k && remaining > 0 {
        // partial Fisher-Yates over the not-yet-drawn tail
        let j = rng.index(remaining);
        let idx = pool[j];
        pool.swap(j, remaining - 1);
        remaining -= 1;
        let key: Vec<u64> = points[idx]
            .coords
            .iter()
            .map(|c| canonical_bits(*c))
            .collect();
        if seen.insert(key) {
            chosen.push(idx);
        }
    }
    if chosen.len() < k {
        return Err(Error::DegenerateDataset(format!(
            "k = {k} exceeds the {} distinct points",
            chosen.len()
        )));
    }
    MedoidSet::from_points(chosen.into_iter().map(|i| points[i].clone()).collect())
}

fn canonical_bits(c: f64) -> u64 {
    // -0.0 and 0.0 are the same location
    if c == 0.0 {
        0
    } else {
        c.to_bits()
    }
}
