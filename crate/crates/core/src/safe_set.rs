//! Safe set, maximizers and expanders of the confidence-bound SafeOpt
//! variant over a finite grid, and the two selection rules.
//!
//! Expansion is decided with a hypothetical observation of the optimistic
//! value `u_t(θ)` at each candidate; no Lipschitz constant is involved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gp::{Dataset, GpModel, KernelParams, Posterior, WhitenedPosterior};
use crate::grid::GridDomain;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SetMasks {
    pub safe: Vec<bool>,
    pub maximizers: Vec<bool>,
    pub expanders: Vec<bool>,
}

impl SetMasks {
    pub fn safe_count(&self) -> usize {
        count(&self.safe)
    }

    /// Indices in `maximizers ∪ expanders`.
    pub fn explorable(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.safe.len()).filter(|&i| self.maximizers[i] || self.expanders[i])
    }
}

pub fn count(mask: &[bool]) -> usize {
    mask.iter().filter(|b| **b).count()
}

fn require_bounds(post: &Posterior) -> Result<()> {
    if !post.has_bounds() {
        return Err(Error::domain("posterior has no confidence bounds"));
    }
    Ok(())
}

/// `S_t = {θ | ℓ_t(θ) ≥ j_min}`. An all-false mask is a valid result.
pub fn compute_safe_set(post: &Posterior, j_min: f64) -> Result<Vec<bool>> {
    require_bounds(post)?;
    Ok(post.lower.iter().map(|l| *l >= j_min).collect())
}

/// `M_t = {θ ∈ S_t | u_t(θ) ≥ max_{S_t} ℓ_t}`.
pub fn compute_maximizers(post: &Posterior, safe: &[bool]) -> Result<Vec<bool>> {
    require_bounds(post)?;
    let best_lower = safe
        .iter()
        .zip(&post.lower)
        .filter(|(s, _)| **s)
        .map(|(_, l)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if best_lower == f64::NEG_INFINITY {
        return Err(Error::domain("maximizers of an empty safe set"));
    }
    Ok(safe
        .iter()
        .zip(&post.upper)
        .map(|(s, u)| *s && *u >= best_lower)
        .collect())
}

/// Safe points with at least one axis-adjacent unsafe neighbour.
pub fn boundary(grid: &GridDomain, safe: &[bool]) -> Vec<bool> {
    (0..grid.len())
        .map(|i| safe[i] && grid.neighbors(i).any(|j| !safe[j]))
        .collect()
}

/// Which safe points are tested as expanders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Candidates {
    /// Safe points with an unsafe grid neighbour. Cheaper, but an interior
    /// point whose optimistic observation reaches past the boundary is
    /// missed, so the mask can be a strict subset of the exact one.
    #[default]
    Boundary,
    /// Every safe point; exact.
    AllSafe,
}

/// Inputs for the expander computation over a grid posterior that already
/// carries whitened cross-covariances.
pub struct ExpanderInputs<'a> {
    pub params: &'a KernelParams,
    pub grid: &'a GridDomain,
    pub posterior: &'a WhitenedPosterior,
    pub safe: &'a [bool],
    pub j_min: f64,
    pub beta: f64,
    /// Jitter of the fitted model; added to the hypothetical noise variance.
    pub jitter: f64,
    pub candidates: Candidates,
}

impl ExpanderInputs<'_> {
    /// `true` if observing `u_t(θ_c)` at candidate `c` lifts the lower
    /// bound of any currently unsafe grid point to `j_min`.
    ///
    /// Uses the exact rank-one update of the posterior:
    /// `μ'(θ) = μ(θ) + c(θ,θ_c)(u_c - μ_c)/s` and
    /// `σ'²(θ) = σ²(θ) - c(θ,θ_c)²/s` with `s = σ²(θ_c) + σ_n² + jitter`.
    pub fn is_expander(&self, c: usize, unsafe_idx: &[usize]) -> bool {
        let post = &self.posterior.posterior;
        let points = self.grid.points();
        let s_c = post.std_dev[c];
        let denom = s_c * s_c + self.params.noise_std * self.params.noise_std + self.jitter;
        if denom <= 0.0 {
            return false;
        }
        let gain = (post.upper[c] - post.mean[c]) / denom;
        unsafe_idx.iter().any(|&j| {
            let cov = self.posterior.covariance(self.params, points, j, c);
            let mean = post.mean[j] + cov * gain;
            let var = post.std_dev[j] * post.std_dev[j] - cov * cov / denom;
            mean - self.beta * var.max(0.0).sqrt() >= self.j_min
        })
    }

    /// `G_t` over the configured candidates; points outside them are
    /// marked non-expanders without evaluation.
    pub fn compute(&self, exec: Execution) -> Vec<bool> {
        let n = self.grid.len();
        let unsafe_idx: Vec<usize> = (0..n).filter(|&i| !self.safe[i]).collect();
        if unsafe_idx.is_empty() {
            return vec![false; n];
        }
        let pool = match self.candidates {
            Candidates::Boundary => boundary(self.grid, self.safe),
            Candidates::AllSafe => self.safe.to_vec(),
        };
        let candidates: Vec<usize> = pool
            .into_iter()
            .enumerate()
            .filter_map(|(i, b)| b.then_some(i))
            .collect();
        let hits = exec.map_slice(&candidates, |&c| self.is_expander(c, &unsafe_idx));
        let mut mask = vec![false; n];
        for (c, hit) in candidates.into_iter().zip(hits) {
            mask[c] = hit;
        }
        mask
    }
}

/// `G_t = {θ ∈ S_t | g_t(θ) > 0}` from scratch: refits the GP on `data`.
/// `post` must be the bounded posterior of `data` over `grid`.
#[allow(clippy::too_many_arguments)]
pub fn compute_expanders(
    params: &KernelParams,
    data: &Dataset,
    post: &Posterior,
    safe: &[bool],
    grid: &GridDomain,
    j_min: f64,
    beta: f64,
    candidates: Candidates,
    exec: Execution,
) -> Result<Vec<bool>> {
    require_bounds(post)?;
    if !safe.iter().any(|s| *s) {
        return Err(Error::domain("expanders of an empty safe set"));
    }
    let model = GpModel::fit(params, data)?;
    let mut whitened = model.predict_whitened(grid.points(), exec)?;
    whitened.posterior = post.clone();
    Ok(ExpanderInputs {
        params,
        grid,
        posterior: &whitened,
        safe,
        j_min,
        beta,
        jitter: model.jitter(),
        candidates,
    }
    .compute(exec))
}

fn argmax_by(indices: impl Iterator<Item = usize>, score: impl Fn(usize) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in indices {
        let s = score(i);
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// Widest confidence interval over `M_t ∪ G_t`; lowest index on ties.
/// `None` when the union is empty.
pub fn acquire_explore(post: &Posterior, masks: &SetMasks) -> Option<usize> {
    argmax_by(masks.explorable(), |i| post.width(i))
}

/// Highest posterior mean over the safe set; lowest index on ties.
/// `None` when the safe set is empty.
pub fn acquire_exploit(post: &Posterior, safe: &[bool]) -> Option<usize> {
    argmax_by((0..safe.len()).filter(|&i| safe[i]), |i| post.mean[i])
}
