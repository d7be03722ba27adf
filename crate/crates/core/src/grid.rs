use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned bounds and resolution of a parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// `(lower, upper)` per dimension, raw parameter units.
    pub bounds: Vec<(f64, f64)>,
    /// Number of grid points per dimension.
    pub counts: Vec<usize>,
}

/// Full Cartesian grid over the parameter box, indexed in row-major order
/// (last dimension varies fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain {
    spec: GridSpec,
    strides: Vec<usize>,
    points: Vec<Vec<f64>>,
}

impl GridDomain {
    pub fn new(spec: GridSpec) -> Result<Self> {
        if spec.bounds.is_empty() || spec.bounds.len() != spec.counts.len() {
            return Err(Error::config(format!(
                "grid has {} bounds but {} counts",
                spec.bounds.len(),
                spec.counts.len()
            )));
        }
        for (d, (&(lo, hi), &n)) in spec.bounds.iter().zip(&spec.counts).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::config(format!(
                    "dimension {d}: bounds ({lo}, {hi}) are not increasing"
                )));
            }
            if n < 2 {
                return Err(Error::config(format!(
                    "dimension {d}: needs at least 2 points, got {n}"
                )));
            }
        }
        let dim = spec.counts.len();
        let mut strides = vec![1; dim];
        for d in (0..dim - 1).rev() {
            strides[d] = strides[d + 1] * spec.counts[d + 1];
        }
        let total = strides[0] * spec.counts[0];
        let points = (0..total)
            .map(|i| {
                (0..dim)
                    .map(|d| {
                        let k = (i / strides[d]) % spec.counts[d];
                        spec.coordinate(d, k)
                    })
                    .collect()
            })
            .collect();
        Ok(GridDomain {
            spec,
            strides,
            points,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.counts.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(&self.spec.bounds)
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    /// Indices of the axis-adjacent grid neighbours of point `i`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim()).flat_map(move |d| {
            let k = (i / self.strides[d]) % self.spec.counts[d];
            let down = (k > 0).then(|| i - self.strides[d]);
            let up = (k + 1 < self.spec.counts[d]).then(|| i + self.strides[d]);
            down.into_iter().chain(up)
        })
    }

    /// Nearest grid point to `theta` under the distance scaled by `scales`.
    /// Ties go to the lowest index.
    pub fn nearest(&self, theta: &[f64], scales: &[f64]) -> Result<(usize, f64)> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.points.iter().enumerate() {
            let d2: f64 = p
                .iter()
                .zip(theta)
                .zip(scales)
                .map(|((a, b), s)| ((a - b) / s).powi(2))
                .sum();
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        Ok((best.0, best.1.sqrt()))
    }
}

impl GridSpec {
    fn coordinate(&self, d: usize, k: usize) -> f64 {
        let (lo, hi) = self.bounds[d];
        let n = self.counts[d];
        if k + 1 == n {
            hi
        } else {
            lo + (hi - lo) * k as f64 / (n - 1) as f64
        }
    }
}
