//! Frozen Gaussian-process sample objectives on a grid.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{KernelParams, JITTER_MAX, JITTER_START};
use crate::grid::GridDomain;

/// Largest grid a sample may be drawn on.
pub const MAX_SAMPLE_POINTS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ChangeKind {
    /// Independent redraw from the same prior.
    Resample,
    /// Add a constant offset to the whole function.
    Shift { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangeSpec {
    pub round: u32,
    #[serde(flatten)]
    pub kind: ChangeKind,
}

/// One or two objective tables over the grid, indexed like the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveTable {
    pub before: Vec<f64>,
    pub after: Option<(u32, Vec<f64>)>,
}

impl ObjectiveTable {
    pub fn at(&self, round: u32, index: usize) -> f64 {
        match &self.after {
            Some((tau, table)) if round >= *tau => table[index],
            _ => self.before[index],
        }
    }
}

/// Lower Cholesky factor of the prior covariance over the grid.
pub fn prior_factor(kernel: &KernelParams, grid: &GridDomain) -> Result<DMatrix<f64>> {
    if grid.len() > MAX_SAMPLE_POINTS {
        return Err(Error::domain(format!(
            "grid of {} points exceeds the sampling limit {MAX_SAMPLE_POINTS}",
            grid.len()
        )));
    }
    kernel.check_dim(grid.dim())?;
    let pts = grid.points();
    let n = pts.len();
    let cov = DMatrix::from_fn(n, n, |i, j| kernel.eval_unchecked(&pts[i], &pts[j]));
    let mut rel = JITTER_START;
    loop {
        let jitter = rel * kernel.prior_variance();
        let mut a = cov.clone();
        for i in 0..n {
            a[(i, i)] += jitter;
        }
        if let Some(chol) = a.cholesky() {
            return Ok(chol.unpack());
        }
        if rel >= JITTER_MAX {
            return Err(Error::Numerical {
                dataset_len: n,
                jitter,
            });
        }
        rel = (rel * 10.0).min(JITTER_MAX);
    }
}

/// Draws `prior_mean + L z` with `z ~ N(0, I)`.
pub fn draw<R: Rng + ?Sized>(factor: &DMatrix<f64>, prior_mean: f64, rng: &mut R) -> Vec<f64> {
    let n = factor.nrows();
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let sample = factor * z;
    sample.iter().map(|v| v + prior_mean).collect()
}

/// Exact GP sample(s) over the grid, with `kernel.prior_mean` as offset.
pub fn sample_synthetic_objective<R: Rng + ?Sized>(
    kernel: &KernelParams,
    grid: &GridDomain,
    rng: &mut R,
    change: Option<ChangeSpec>,
) -> Result<ObjectiveTable> {
    let factor = prior_factor(kernel, grid)?;
    Ok(sample_with_factor(&factor, kernel.prior_mean, rng, change))
}

pub fn sample_with_factor<R: Rng + ?Sized>(
    factor: &DMatrix<f64>,
    prior_mean: f64,
    rng: &mut R,
    change: Option<ChangeSpec>,
) -> ObjectiveTable {
    let before = draw(factor, prior_mean, rng);
    let after = change.map(|c| {
        let table = match c.kind {
            ChangeKind::Resample => draw(factor, prior_mean, rng),
            ChangeKind::Shift { delta } => before.iter().map(|v| v + delta).collect(),
        };
        (c.round, table)
    });
    ObjectiveTable { before, after }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::grid::GridSpec;

    fn setup() -> (KernelParams, GridDomain) {
        let kernel = KernelParams::new(vec![0.2], 1.0, 0.0, 0.0).unwrap();
        let grid = GridDomain::new(GridSpec {
            bounds: vec![(0.0, 1.0)],
            counts: vec![30],
        })
        .unwrap();
        (kernel, grid)
    }

    #[test]
    fn seeds_are_reproducible() {
        let (k, g) = setup();
        let a =
            sample_synthetic_objective(&k, &g, &mut ChaCha8Rng::seed_from_u64(3), None).unwrap();
        let b =
            sample_synthetic_objective(&k, &g, &mut ChaCha8Rng::seed_from_u64(3), None).unwrap();
        let c =
            sample_synthetic_objective(&k, &g, &mut ChaCha8Rng::seed_from_u64(4), None).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.before, c.before);
        assert_eq!(a.at(1, 5), a.at(60, 5));
    }

    #[test]
    fn changes() {
        let (k, g) = setup();
        let change = ChangeSpec {
            round: 10,
            kind: ChangeKind::Shift { delta: 0.5 },
        };
        let t = sample_synthetic_objective(&k, &g, &mut ChaCha8Rng::seed_from_u64(1), Some(change))
            .unwrap();
        assert_eq!(t.at(9, 3) + 0.5, t.at(10, 3));
        let change = ChangeSpec {
            round: 10,
            kind: ChangeKind::Resample,
        };
        let t = sample_synthetic_objective(&k, &g, &mut ChaCha8Rng::seed_from_u64(1), Some(change))
            .unwrap();
        assert_ne!(t.at(9, 3), t.at(10, 3));
    }

    #[test]
    fn sample_covariance_matches_kernel() {
        let (k, g) = setup();
        let factor = prior_factor(&k, &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws: Vec<Vec<f64>> = (0..4000).map(|_| draw(&factor, 0.0, &mut rng)).collect();
        let cov = |i: usize, j: usize| {
            draws.iter().map(|d| d[i] * d[j]).sum::<f64>() / draws.len() as f64
        };
        assert!((cov(0, 0) - 1.0).abs() < 0.08);
        let expected = k.eval(g.point(0), g.point(3)).unwrap();
        assert!((cov(0, 3) - expected).abs() < 0.08);
    }

    #[test]
    fn oversized_grid_rejected() {
        let k = KernelParams::new(vec![0.2, 0.2], 1.0, 0.0, 0.0).unwrap();
        let g = GridDomain::new(GridSpec {
            bounds: vec![(0.0, 1.0), (0.0, 1.0)],
            counts: vec![80, 80],
        })
        .unwrap();
        assert!(prior_factor(&k, &g).is_err());
    }
}
