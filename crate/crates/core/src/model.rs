//! Domain types, distances and the clustering objective.
//!
//! The objective is the sum over clusters of the squared Euclidean distance
//! from every member to its medoid. A plain (non-squared) variant is kept
//! behind [`CostMetric::Plain`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Coordinate storage. Two dimensions stay inline.
pub type Coords = SmallVec<[f64; 2]>;

/// A spatial point with its dataset row identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub id: u64,
    pub coords: Coords,
}

impl Point {
    pub fn new(id: u64, coords: impl IntoIterator<Item = f64>) -> Self {
        Point {
            id,
            coords: coords.into_iter().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }
}

/// Which per-point term the objective sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMetric {
    #[default]
    Squared,
    Plain,
}

impl CostMetric {
    /// Cost contribution of `a` when served by `b`. Dimensions are not checked.
    #[inline]
    pub fn term(self, a: &[f64], b: &[f64]) -> f64 {
        let sq = sq_dist(a, b);
        match self {
            CostMetric::Squared => sq,
            CostMetric::Plain => sq.sqrt(),
        }
    }
}

impl FromStr for CostMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(CostMetric::Squared),
            "plain" => Ok(CostMetric::Plain),
            other => Err(Error::InvalidInput(format!(
                "unknown cost metric {other:?} (expected squared|plain)"
            ))),
        }
    }
}

impl fmt::Display for CostMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostMetric::Squared => "squared",
            CostMetric::Plain => "plain",
        })
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_dims(a: &Point, b: &Point) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// Euclidean distance.
pub fn distance(a: &Point, b: &Point) -> Result<f64> {
    check_dims(a, b)?;
    Ok(sq_dist(&a.coords, &b.coords).sqrt())
}

pub fn squared_distance(a: &Point, b: &Point) -> Result<f64> {
    check_dims(a, b)?;
    Ok(sq_dist(&a.coords, &b.coords))
}

/// Checks that every point is finite and shares one dimension; returns it.
///
/// An empty slice has no dimension and yields `None`.
pub fn validate_points(points: &[Point]) -> Result<Option<usize>> {
    let Some(first) = points.first() else {
        return Ok(None);
    };
    let dim = first.dim();
    if dim == 0 {
        return Err(Error::InvalidInput(format!(
            "point {} has no coordinates",
            first.id
        )));
    }
    for p in points {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
        if !p.is_finite() {
            return Err(Error::InvalidInput(format!(
                "point {} has a non-finite coordinate",
                p.id
            )));
        }
    }
    Ok(Some(dim))
}

/// A cluster representative drawn from the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Medoid {
    pub cluster_id: u32,
    pub point: Point,
}

/// The k current medoids, indexed by cluster id.
#[derive(Debug, Clone, PartialEq)]
pub struct MedoidSet {
    medoids: Vec<Medoid>,
}

impl MedoidSet {
    /// Builds a set from points in cluster order: the i-th point gets cluster id i.
    pub fn from_points(points: Vec<Point>) -> Result<Self> {
        let medoids = points
            .into_iter()
            .enumerate()
            .map(|(i, point)| Medoid {
                cluster_id: i as u32,
                point,
            })
            .collect();
        Self::from_medoids(medoids)
    }

    pub fn from_medoids(medoids: Vec<Medoid>) -> Result<Self> {
        if medoids.is_empty() {
            return Err(Error::InvalidInput("a medoid set needs k >= 1".into()));
        }
        for (i, m) in medoids.iter().enumerate() {
            if m.cluster_id as usize != i {
                return Err(Error::InvalidInput(format!(
                    "medoid at position {i} has cluster id {}",
                    m.cluster_id
                )));
            }
        }
        let mut ids: Vec<u64> = medoids.iter().map(|m| m.point.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!(
                "point {} appears twice in the medoid set",
                w[0]
            )));
        }
        let points: Vec<Point> = medoids.iter().map(|m| m.point.clone()).collect();
        validate_points(&points)?;
        Ok(MedoidSet { medoids })
    }

    pub fn k(&self) -> usize {
        self.medoids.len()
    }

    pub fn dim(&self) -> usize {
        self.medoids[0].point.dim()
    }

    pub fn medoids(&self) -> &[Medoid] {
        &self.medoids
    }

    pub fn get(&self, cluster_id: u32) -> Option<&Medoid> {
        self.medoids.get(cluster_id as usize)
    }

    pub fn point_ids(&self) -> Vec<u64> {
        self.medoids.iter().map(|m| m.point.id).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Medoid> {
        self.medoids.iter()
    }

    /// Returns a copy with the medoid of `cluster_id` replaced.
    pub fn with_replaced(&self, cluster_id: u32, point: Point) -> Result<Self> {
        let mut medoids = self.medoids.clone();
        let slot = medoids
            .get_mut(cluster_id as usize)
            .ok_or_else(|| Error::InvalidInput(format!("no cluster {cluster_id}")))?;
        slot.point = point;
        Self::from_medoids(medoids)
    }
}

/// Cluster label per dataset row, aligned with the order of the points slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub labels: Vec<u32>,
}

impl Assignment {
    /// Labels every point with its nearest medoid.
    pub fn nearest(points: &[Point], medoids: &MedoidSet) -> Result<Self> {
        let labels = points
            .iter()
            .map(|p| nearest_medoid(p, medoids).map(|(c, _)| c))
            .collect::<Result<_>>()?;
        Ok(Assignment { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of points per cluster.
    pub fn cluster_sizes(&self, k: usize) -> Vec<usize> {
        let mut sizes = vec![0; k];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }
}

/// Total clustering cost. Always non-negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
pub struct CostValue(f64);

impl CostValue {
    pub fn new(value: f64) -> Result<Self> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::InvalidInput(format!("invalid cost value {value}")));
        }
        Ok(CostValue(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for CostValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Sum of squared distances from each point to the medoid of its label.
pub fn total_cost(
    points: &[Point],
    medoids: &MedoidSet,
    assignment: &Assignment,
) -> Result<CostValue> {
    total_cost_with(CostMetric::Squared, points, medoids, assignment)
}

pub fn total_cost_with(
    metric: CostMetric,
    points: &[Point],
    medoids: &MedoidSet,
    assignment: &Assignment,
) -> Result<CostValue> {
    if assignment.len() != points.len() {
        return Err(Error::InvalidInput(format!(
            "assignment covers {} of {} points",
            assignment.len(),
            points.len()
        )));
    }
    let mut sum = 0.0;
    for (p, &label) in points.iter().zip(&assignment.labels) {
        let m = medoids.get(label).ok_or_else(|| {
            Error::InvalidInput(format!("point {} has unknown label {label}", p.id))
        })?;
        check_dims(&m.point, p)?;
        sum += metric.term(&p.coords, &m.point.coords);
    }
    CostValue::new(sum)
}

/// Index of the closest medoid and its squared distance; ties go to the lower index.
#[inline]
pub(crate) fn nearest_index<'a>(
    coords: &[f64],
    medoid_coords: impl IntoIterator<Item = &'a [f64]>,
) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, m) in medoid_coords.into_iter().enumerate() {
        let d = sq_dist(coords, m);
        if d < best.1 || best.0 == usize::MAX {
            best = (i, d);
        }
    }
    best
}

/// Closest medoid of `p` and the Euclidean distance to it.
pub fn nearest_medoid(p: &Point, medoids: &MedoidSet) -> Result<(u32, f64)> {
    if p.dim() != medoids.dim() {
        return Err(Error::DimensionMismatch {
            expected: medoids.dim(),
            found: p.dim(),
        });
    }
    let (idx, sq) = nearest_index(&p.coords, medoids.iter().map(|m| &m.point.coords[..]));
    Ok((medoids.medoids[idx].cluster_id, sq.sqrt()))
}
