//! Gaussian-process regression with a fixed Matérn-5/2 kernel.
//!
//! Hyperparameters are inputs, never refit. The prior mean is a constant.
//! All costs handled here are in normalized units.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

const SQRT_5: f64 = 2.236_067_977_499_79;

/// Initial diagonal jitter, relative to the prior variance.
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter tried before giving up, relative to the prior variance.
pub const JITTER_MAX: f64 = 1e-4;

/// Matérn-5/2 correlation as a function of the scaled distance `r`.
#[inline]
pub fn matern52(r: f64) -> f64 {
    let s = SQRT_5 * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// One lengthscale per input dimension.
    pub lengthscales: Vec<f64>,
    /// Prior standard deviation `σ_D0`.
    pub prior_std: f64,
    /// Observation noise standard deviation `σ_n`.
    pub noise_std: f64,
    /// Constant prior mean `μ_D0`.
    pub prior_mean: f64,
}

impl Default for KernelParams {
    /// Defaults for the four-gain position controller `[P_xy, P_z, I_xy, I_z]`.
    fn default() -> Self {
        KernelParams {
            lengthscales: vec![0.15, 0.75, 0.025, 0.050],
            prior_std: 1.0 / 3.0,
            noise_std: 0.016,
            prior_mean: -1.0,
        }
    }
}

impl KernelParams {
    pub fn new(
        lengthscales: Vec<f64>,
        prior_std: f64,
        noise_std: f64,
        prior_mean: f64,
    ) -> Result<Self> {
        let params = KernelParams {
            lengthscales,
            prior_std,
            noise_std,
            prior_mean,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::config("kernel needs at least one lengthscale"));
        }
        if let Some(l) = self
            .lengthscales
            .iter()
            .find(|l| !(l.is_finite() && **l > 0.0))
        {
            return Err(Error::config(format!("lengthscale {l} must be positive")));
        }
        if !(self.prior_std.is_finite() && self.prior_std > 0.0) {
            return Err(Error::config(format!(
                "prior std {} must be positive",
                self.prior_std
            )));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::config(format!(
                "noise std {} must be nonnegative",
                self.noise_std
            )));
        }
        if !self.prior_mean.is_finite() {
            return Err(Error::config("prior mean must be finite"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn prior_variance(&self) -> f64 {
        self.prior_std * self.prior_std
    }

    /// Covariance `k(a, b)`.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check_dim(a.len())?;
        self.check_dim(b.len())?;
        Ok(self.eval_unchecked(a, b))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let d = (x - y) / l;
                d * d
            })
            .sum();
        self.prior_variance() * matern52(r2.sqrt())
    }

    pub(crate) fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub theta: Vec<f64>,
    pub y: f64,
}

/// Conditioning data since the last reset, in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    points: Vec<Observation>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, theta: Vec<f64>, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::domain("observations must be finite"));
        }
        if let Some(first) = self.points.first() {
            if first.theta.len() != theta.len() {
                return Err(Error::Dimension {
                    expected: first.theta.len(),
                    got: theta.len(),
                });
            }
        }
        self.points.push(Observation { theta, y });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Observation> {
        self.points.iter()
    }

    pub fn points(&self) -> &[Observation] {
        &self.points
    }

    pub fn clear(&mut self) {
        self.points.clear();
    }
}

impl FromIterator<(Vec<f64>, f64)> for Dataset {
    fn from_iter<I: IntoIterator<Item = (Vec<f64>, f64)>>(iter: I) -> Self {
        Dataset {
            points: iter
                .into_iter()
                .map(|(theta, y)| Observation { theta, y })
                .collect(),
        }
    }
}

/// Per-query posterior summary. `lower`/`upper` stay empty until
/// [`Posterior::confidence_bounds`] is applied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Posterior {
    pub mean: Vec<f64>,
    pub std_dev: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Posterior {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn has_bounds(&self) -> bool {
        self.lower.len() == self.mean.len() && !self.mean.is_empty()
    }

    /// Fills `lower = mean - beta * std` and `upper = mean + beta * std`.
    pub fn confidence_bounds(mut self, beta: f64) -> Self {
        self.lower = self
            .mean
            .iter()
            .zip(&self.std_dev)
            .map(|(m, s)| m - beta * s)
            .collect();
        self.upper = self
            .mean
            .iter()
            .zip(&self.std_dev)
            .map(|(m, s)| m + beta * s)
            .collect();
        self
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }
}

/// A GP conditioned on a dataset: Cholesky factor of `K + (σ_n² + jitter) I`
/// and the weight vector `α = (K + ...)⁻¹ (y - μ_D0)`.
#[derive(Debug, Clone)]
pub struct GpModel {
    params: KernelParams,
    inputs: Vec<Vec<f64>>,
    chol_l: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpModel {
    pub fn fit(params: &KernelParams, data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::domain("cannot condition on an empty dataset"));
        }
        for obs in data.iter() {
            params.check_dim(obs.theta.len())?;
        }
        let n = data.len();
        let inputs: Vec<Vec<f64>> = data.iter().map(|o| o.theta.clone()).collect();
        let gram = DMatrix::from_fn(n, n, |i, j| params.eval_unchecked(&inputs[i], &inputs[j]));
        let noise_var = params.noise_std * params.noise_std;
        let var0 = params.prior_variance();

        let mut rel = JITTER_START;
        loop {
            let jitter = rel * var0;
            let mut a = gram.clone();
            for i in 0..n {
                a[(i, i)] += noise_var + jitter;
            }
            if let Some(chol) = a.cholesky() {
                let resid = DVector::from_iterator(n, data.iter().map(|o| o.y - params.prior_mean));
                let alpha = chol.solve(&resid);
                return Ok(GpModel {
                    params: params.clone(),
                    inputs,
                    chol_l: chol.unpack(),
                    alpha,
                    jitter,
                });
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

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// Absolute jitter that was added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Whitened cross-covariance `v = L⁻¹ k_t(θ)` for one query.
    pub fn whiten(&self, theta: &[f64]) -> Vec<f64> {
        let n = self.inputs.len();
        let mut v: Vec<f64> = self
            .inputs
            .iter()
            .map(|x| self.params.eval_unchecked(x, theta))
            .collect();
        for i in 0..n {
            let s = (0..i).fold(v[i], |s, k| s - self.chol_l[(i, k)] * v[k]);
            v[i] = s / self.chol_l[(i, i)];
        }
        v
    }

    fn mean_from_cross(&self, theta: &[f64]) -> f64 {
        let m: f64 = self
            .inputs
            .iter()
            .zip(self.alpha.iter())
            .map(|(x, a)| self.params.eval_unchecked(x, theta) * a)
            .sum();
        self.params.prior_mean + m
    }

    /// Posterior mean and variance at one point.
    pub fn predict_one(&self, theta: &[f64]) -> Result<(f64, f64)> {
        self.params.check_dim(theta.len())?;
        let v = self.whiten(theta);
        let var = self.params.prior_variance() - v.iter().map(|x| x * x).sum::<f64>();
        Ok((self.mean_from_cross(theta), var.max(0.0)))
    }

    pub fn predict(&self, queries: &[Vec<f64>], exec: Execution) -> Result<Posterior> {
        Ok(self.predict_whitened(queries, exec)?.posterior)
    }

    /// Posterior over `queries`, keeping the whitened cross-covariances so
    /// that posterior covariances between queries can be formed later.
    pub fn predict_whitened(
        &self,
        queries: &[Vec<f64>],
        exec: Execution,
    ) -> Result<WhitenedPosterior> {
        if queries.is_empty() {
            return Err(Error::domain("posterior needs at least one query"));
        }
        for q in queries {
            self.params.check_dim(q.len())?;
        }
        let var0 = self.params.prior_variance();
        let rows = exec.map_slice(queries, |q| {
            let v = self.whiten(q);
            let var = var0 - v.iter().map(|x| x * x).sum::<f64>();
            (self.mean_from_cross(q), var.max(0.0).sqrt(), v)
        });
        let n = self.inputs.len();
        let mut mean = Vec::with_capacity(queries.len());
        let mut std_dev = Vec::with_capacity(queries.len());
        let mut whitened = Vec::with_capacity(queries.len() * n);
        for (m, s, v) in rows {
            mean.push(m);
            std_dev.push(s);
            whitened.extend(v);
        }
        Ok(WhitenedPosterior {
            posterior: Posterior {
                mean,
                std_dev,
                ..Posterior::default()
            },
            whitened,
            data_len: n,
        })
    }
}

/// Grid posterior plus the per-query whitened vectors `L⁻¹ k_t(θ)`.
#[derive(Debug, Clone)]
pub struct WhitenedPosterior {
    pub posterior: Posterior,
    whitened: Vec<f64>,
    data_len: usize,
}

impl WhitenedPosterior {
    pub fn whitened(&self, i: usize) -> &[f64] {
        &self.whitened[i * self.data_len..(i + 1) * self.data_len]
    }

    /// Posterior covariance between queries `i` and `j`.
    pub fn covariance(
        &self,
        params: &KernelParams,
        points: &[Vec<f64>],
        i: usize,
        j: usize,
    ) -> f64 {
        let dot: f64 = self
            .whitened(i)
            .iter()
            .zip(self.whitened(j))
            .map(|(a, b)| a * b)
            .sum();
        params.eval_unchecked(&points[i], &points[j]) - dot
    }
}

/// Posterior over `queries` conditioned on `data`.
pub fn posterior(params: &KernelParams, data: &Dataset, queries: &[Vec<f64>]) -> Result<Posterior> {
    GpModel::fit(params, data)?.predict(queries, Execution::Sequential)
}
