//! Dataset ingestion, the row-keyed point store, and synthetic blob data.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{validate_points, Point};
use crate::rng::SeededRng;

/// Points keyed by consecutive row numbers `0..row_count`.
///
/// Immutable once built; range reads borrow from it.
#[derive(Debug, Clone, PartialEq)]
pub struct RowStore {
    path: Option<PathBuf>,
    dimension: usize,
    rows: Vec<Point>,
}

impl RowStore {
    /// Builds a store from in-memory points, validating ids and coordinates.
    pub fn from_points(dimension: usize, rows: Vec<Point>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if let Some(d) = validate_points(&rows)? {
            if d != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: d,
                });
            }
        }
        let mut seen = HashSet::with_capacity(rows.len());
        for p in &rows {
            if !seen.insert(p.id) {
                return Err(Error::InvalidInput(format!("duplicate point id {}", p.id)));
            }
        }
        Ok(RowStore {
            path: None,
            dimension,
            rows,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn points(&self) -> &[Point] {
        &self.rows
    }

    /// Rows `lo..hi` in row order.
    pub fn read_range(&self, lo: usize, hi: usize) -> Result<&[Point]> {
        if lo > hi || hi > self.rows.len() {
            return Err(Error::InvalidInput(format!(
                "range [{lo}, {hi}) outside 0..{}",
                self.rows.len()
            )));
        }
        Ok(&self.rows[lo..hi])
    }

    /// CSV text with one `id,x1,...,xd` line per row; coordinates keep full precision.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.rows.len() * (8 + 20 * self.dimension));
        for p in &self.rows {
            let _ = write!(s, "{}", p.id);
            for c in &p.coords {
                let _ = write!(s, ",{c:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Reads a CSV of `x1,...,xd` or `id,x1,...,xd` lines (one form per file).
/// Missing ids are assigned by line order. Blank lines are skipped.
pub fn ingest_csv(path: &Path, dimension: usize) -> Result<RowStore> {
    if dimension == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut rows = Vec::new();
    let mut with_ids: Option<bool> = None;
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let has_id = if fields.len() == dimension {
            false
        } else if fields.len() == dimension + 1 {
            true
        } else {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                line: lineno,
                message: format!(
                    "expected {dimension} coordinates (optionally preceded by an id), found {} fields",
                    fields.len()
                ),
            });
        };
        match with_ids {
            None => with_ids = Some(has_id),
            Some(prev) if prev != has_id => {
                return Err(Error::Schema {
                    path: path.to_path_buf(),
                    line: lineno,
                    message: "mixes lines with and without an id column".into(),
                })
            }
            Some(_) => {}
        }
        let (id, coord_fields) = if has_id {
            let id = fields[0]
                .parse::<u64>()
                .map_err(|e| parse_err(lineno, format!("bad id {:?}: {e}", fields[0])))?;
            (id, &fields[1..])
        } else {
            (rows.len() as u64, &fields[..])
        };
        let mut coords = Vec::with_capacity(dimension);
        for f in coord_fields {
            let c = f
                .parse::<f64>()
                .map_err(|e| parse_err(lineno, format!("bad coordinate {f:?}: {e}")))?;
            if !c.is_finite() {
                return Err(Error::Validation {
                    path: path.to_path_buf(),
                    line: lineno,
                    message: format!("non-finite coordinate {f:?}"),
                });
            }
            coords.push(c);
        }
        if !seen.insert(id) {
            return Err(Error::Validation {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("duplicate point id {id}"),
            });
        }
        rows.push(Point::new(id, coords));
    }
    Ok(RowStore {
        path: Some(path.to_path_buf()),
        dimension,
        rows,
    })
}

/// Parameters for isotropic Gaussian blobs.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub n_points: usize,
    pub n_centers: usize,
    /// Every center coordinate is drawn uniformly from this range.
    pub center_box: (f64, f64),
    pub stddev: f64,
    pub dimension: usize,
    pub seed: u64,
}

impl BlobSpec {
    pub fn new(n_points: usize, n_centers: usize, seed: u64) -> Self {
        BlobSpec {
            n_points,
            n_centers,
            center_box: (-10.0, 10.0),
            stddev: 1.0,
            dimension: 2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_centers < 1 || self.n_points < self.n_centers {
            return Err(Error::InvalidInput(format!(
                "need n_points >= n_centers >= 1, got {} points and {} centers",
                self.n_points, self.n_centers
            )));
        }
        if !(self.stddev > 0.0) || !self.stddev.is_finite() {
            return Err(Error::InvalidInput(format!(
                "stddev must be positive, got {}",
                self.stddev
            )));
        }
        let (lo, hi) = self.center_box;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidInput(format!("bad center box [{lo}, {hi}]")));
        }
        if self.dimension == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        Ok(())
    }
}

/// Draws centers uniformly in the box, then assigns points to centers
/// round-robin and scatters each with Gaussian noise.
pub fn generate_blobs(spec: &BlobSpec) -> Result<RowStore> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed);
    let (lo, hi) = spec.center_box;
    let centers: Vec<Vec<f64>> = (0..spec.n_centers)
        .map(|_| (0..spec.dimension).map(|_| rng.uniform(lo, hi)).collect())
        .collect();
    let noise = Normal::new(0.0, spec.stddev)
        .map_err(|e| Error::InvalidInput(format!("bad stddev: {e}")))?;
    let rows = (0..spec.n_points)
        .map(|i| {
            let center = &centers[i % spec.n_centers];
            Point::new(
                i as u64,
                center.iter().map(|c| c + noise.sample(rng.inner())),
            )
        })
        .collect();
    Ok(RowStore {
        path: None,
        dimension: spec.dimension,
        rows,
    })
}
