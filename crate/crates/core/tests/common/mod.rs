#![allow(dead_code)]

use etso::gp::{Dataset, GpModel, KernelParams, Posterior};
use etso::grid::{GridDomain, GridSpec};
use etso::safe_set::{self, Candidates};
use etso::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matérn-5/2 written out from its closed form.
pub fn kernel(p: &KernelParams, a: &[f64], b: &[f64]) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(&p.lengthscales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    let r = (5.0 * r2).sqrt();
    p.prior_std * p.prior_std * (1.0 + r + 5.0 * r2 / 3.0) * (-r).exp()
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            for k in 0..b[row].len() {
                b[row][k] -= f * b[col][k];
            }
        }
    }
    let m = b[0].len();
    let mut x = vec![vec![0.0; m]; n];
    for row in (0..n).rev() {
        for k in 0..m {
            let mut s = b[row][k];
            for j in row + 1..n {
                s -= a[row][j] * x[j][k];
            }
            x[row][k] = s / a[row][row];
        }
    }
    x
}

/// Posterior mean and variance by a dense direct solve with diagonal
/// `noise_var` (observation noise plus any jitter).
pub fn dense_posterior(
    p: &KernelParams,
    xs: &[Vec<f64>],
    ys: &[f64],
    noise_var: f64,
    queries: &[Vec<f64>],
) -> Vec<(f64, f64)> {
    let n = xs.len();
    let a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| kernel(p, &xs[i], &xs[j]) + if i == j { noise_var } else { 0.0 })
                .collect()
        })
        .collect();
    // columns: residual, then one cross-covariance per query
    let b: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = vec![ys[i] - p.prior_mean];
            row.extend(queries.iter().map(|q| kernel(p, &xs[i], q)));
            row
        })
        .collect();
    let x = solve(a, b);
    queries
        .iter()
        .enumerate()
        .map(|(qi, q)| {
            let k: Vec<f64> = xs.iter().map(|xi| kernel(p, xi, q)).collect();
            let mean = p.prior_mean + (0..n).map(|i| k[i] * x[i][0]).sum::<f64>();
            let var = kernel(p, q, q) - (0..n).map(|i| k[i] * x[i][qi + 1]).sum::<f64>();
            (mean, var.max(0.0))
        })
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

pub struct GpInstance {
    pub params: KernelParams,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
    pub queries: Vec<Vec<f64>>,
}

pub fn random_gp_instance(r: &mut ChaCha8Rng) -> GpInstance {
    let d = r.random_range(1..=4);
    let n = r.random_range(1..=100);
    let params = KernelParams::new(
        (0..d).map(|_| r.random_range(0.1..1.0)).collect(),
        r.random_range(0.2..1.0),
        r.random_range(0.005..0.1),
        r.random_range(-2.0..0.0),
    )
    .unwrap();
    let point = |r: &mut ChaCha8Rng| {
        (0..d)
            .map(|_| r.random_range(0.0..1.0))
            .collect::<Vec<f64>>()
    };
    let xs: Vec<Vec<f64>> = (0..n).map(|_| point(r)).collect();
    let ys = (0..n).map(|_| r.random_range(-2.0..0.5)).collect();
    let queries = (0..20).map(|_| point(r)).collect();
    GpInstance {
        params,
        xs,
        ys,
        queries,
    }
}

impl GpInstance {
    pub fn dataset(&self) -> Dataset {
        let mut data = Dataset::new();
        for (x, y) in self.xs.iter().zip(&self.ys) {
            data.push(x.clone(), *y).unwrap();
        }
        data
    }

    /// Worst relative error of mean and variance against the dense oracle.
    pub fn max_error(&self) -> (f64, f64) {
        let model = GpModel::fit(&self.params, &self.dataset()).unwrap();
        let noise_var = self.params.noise_std.powi(2) + model.jitter();
        let oracle = dense_posterior(&self.params, &self.xs, &self.ys, noise_var, &self.queries);
        let post = model.predict(&self.queries, Execution::Sequential).unwrap();
        let mut worst = (0.0f64, 0.0f64);
        for (i, (m, v)) in oracle.into_iter().enumerate() {
            worst.0 = worst.0.max(rel_err(post.mean[i], m));
            worst.1 = worst.1.max(rel_err(post.std_dev[i].powi(2), v));
        }
        worst
    }
}

pub struct SetInstance {
    pub params: KernelParams,
    pub grid: GridDomain,
    pub data: Dataset,
    pub post: Posterior,
    pub safe: Vec<bool>,
    pub j_min: f64,
    pub beta: f64,
}

/// Random 1-D or 2-D grid with a handful of observations around one seed
/// point and a threshold that leaves part of the grid unsafe.
pub fn random_set_instance(r: &mut ChaCha8Rng) -> SetInstance {
    let d = r.random_range(1..=2);
    let counts: Vec<usize> = if d == 1 {
        vec![r.random_range(10..=200)]
    } else {
        let a = r.random_range(4..=14);
        vec![a, r.random_range(4..=200 / a)]
    };
    let grid = GridDomain::new(GridSpec {
        bounds: vec![(0.0, 1.0); d],
        counts,
    })
    .unwrap();
    let params = KernelParams::new(
        (0..d).map(|_| r.random_range(0.1..0.5)).collect(),
        r.random_range(0.3..1.0),
        r.random_range(0.01..0.1),
        -1.0,
    )
    .unwrap();
    let seed = r.random_range(0..grid.len());
    let mut data = Dataset::new();
    data.push(grid.point(seed).to_vec(), r.random_range(-0.9..-0.3))
        .unwrap();
    for _ in 0..r.random_range(0..6) {
        let i = r.random_range(0..grid.len());
        data.push(grid.point(i).to_vec(), r.random_range(-1.2..-0.2))
            .unwrap();
    }
    let beta = r.random_range(1.0..3.0);
    let post = GpModel::fit(&params, &data)
        .unwrap()
        .predict(grid.points(), Execution::Sequential)
        .unwrap()
        .confidence_bounds(beta);
    let mut lows = post.lower.clone();
    lows.sort_by(f64::total_cmp);
    let q = r.random_range(0.2..0.8);
    let j_min = lows[(q * lows.len() as f64) as usize];
    let safe = safe_set::compute_safe_set(&post, j_min).unwrap();
    SetInstance {
        params,
        grid,
        data,
        post,
        safe,
        j_min,
        beta,
    }
}

impl SetInstance {
    pub fn expanders(&self, candidates: Candidates) -> Vec<bool> {
        safe_set::compute_expanders(
            &self.params,
            &self.data,
            &self.post,
            &self.safe,
            &self.grid,
            self.j_min,
            self.beta,
            candidates,
            Execution::Sequential,
        )
        .unwrap()
    }

    /// Every safe point, refitting with an optimistic observation there.
    pub fn brute_force_expanders(&self) -> Vec<bool> {
        let jitter = GpModel::fit(&self.params, &self.data).unwrap().jitter();
        let noise_var = self.params.noise_std.powi(2) + jitter;
        let unsafe_pts: Vec<Vec<f64>> = (0..self.grid.len())
            .filter(|&i| !self.safe[i])
            .map(|i| self.grid.point(i).to_vec())
            .collect();
        let mut xs: Vec<Vec<f64>> = self.data.iter().map(|o| o.theta.clone()).collect();
        let mut ys: Vec<f64> = self.data.iter().map(|o| o.y).collect();
        xs.push(Vec::new());
        ys.push(0.0);
        (0..self.grid.len())
            .map(|c| {
                if !self.safe[c] || unsafe_pts.is_empty() {
                    return false;
                }
                *xs.last_mut().unwrap() = self.grid.point(c).to_vec();
                *ys.last_mut().unwrap() = self.post.upper[c];
                dense_posterior(&self.params, &xs, &ys, noise_var, &unsafe_pts)
                    .into_iter()
                    .any(|(m, v)| m - self.beta * v.sqrt() >= self.j_min)
            })
            .collect()
    }
}

/// Agreement of one candidate rule with brute force over `n` instances.
#[derive(Debug, Default)]
pub struct ExpanderTally {
    pub instances: usize,
    pub mismatched_instances: usize,
    /// Brute-force expanders the rule missed.
    pub missed: usize,
    /// Points the rule marked that brute force rejects.
    pub spurious: usize,
    pub brute_force_total: usize,
}

pub fn tally_expanders(seed: u64, n: usize, candidates: Candidates) -> ExpanderTally {
    let mut r = rng(seed);
    let mut t = ExpanderTally::default();
    for _ in 0..n {
        let inst = random_set_instance(&mut r);
        let fast = inst.expanders(candidates);
        let slow = inst.brute_force_expanders();
        t.instances += 1;
        t.brute_force_total += slow.iter().filter(|s| **s).count();
        let missed = slow.iter().zip(&fast).filter(|(s, f)| **s && !**f).count();
        let spurious = slow.iter().zip(&fast).filter(|(s, f)| !**s && **f).count();
        t.missed += missed;
        t.spurious += spurious;
        t.mismatched_instances += usize::from(missed + spurious > 0);
    }
    t
}
