//! Event trigger: resets the dataset when an observation deviates from the
//! pre-update posterior mean by more than a stationary objective permits.
//!
//! `ψ = |ĵ_t - μ(θ_t)|` is compared against
//! `κ = a·sqrt(ρ_t')·σ(θ_t) + b·w̄_t'` with `ρ_t' = 2 ln(2π_t'/δ_B)`,
//! `w̄_t' = σ_n sqrt(ρ_t')` and `π_t' = (π²/6) t'²`. The weights are
//! `(1, 1)` unscaled and `(3/4, 1/4)` scaled.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdScaling {
    /// Weights 3/4 on the posterior term and 1/4 on the noise term.
    #[default]
    Scaled,
    /// Weights 1 and 1: the high-probability bound itself.
    Unscaled,
}

impl ThresholdScaling {
    fn weights(self) -> (f64, f64) {
        match self {
            ThresholdScaling::Scaled => (0.75, 0.25),
            ThresholdScaling::Unscaled => (1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerConfig {
    #[serde(default = "default_delta_b")]
    pub delta_b: f64,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    #[serde(default)]
    pub scaling: ThresholdScaling,
}

fn default_delta_b() -> f64 {
    0.1
}

fn default_noise_std() -> f64 {
    0.016
}

impl Default for TriggerConfig {
    fn default() -> Self {
        TriggerConfig {
            delta_b: default_delta_b(),
            noise_std: default_noise_std(),
            scaling: ThresholdScaling::Scaled,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_b > 0.0 && self.delta_b < 1.0) {
            return Err(Error::config(format!(
                "delta_b = {} must lie in (0, 1)",
                self.delta_b
            )));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::config(format!(
                "trigger noise std {} must be nonnegative",
                self.noise_std
            )));
        }
        Ok(())
    }

    /// Threshold `κ` for the current epoch and the pre-update posterior
    /// standard deviation at the query.
    pub fn threshold(&self, t_prime: u32, posterior_std: f64) -> f64 {
        let (a, b) = self.scaling.weights();
        a * rho(t_prime, self.delta_b).sqrt() * posterior_std
            + b * noise_bound(t_prime, self.delta_b, self.noise_std)
    }
}

/// Rounds since the last reset, starting at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerState {
    pub t_prime: u32,
}

impl Default for TriggerState {
    fn default() -> Self {
        TriggerState { t_prime: 1 }
    }
}

/// `π_t' = (π²/6)·t'²`, whose reciprocals sum to one over `t' ≥ 1`.
pub fn pi_series(t_prime: u32) -> f64 {
    PI * PI / 6.0 * f64::from(t_prime) * f64::from(t_prime)
}

/// `ρ_t' = 2 ln(2 π_t' / δ_B)`.
pub fn rho(t_prime: u32, delta_b: f64) -> f64 {
    debug_assert!(t_prime >= 1);
    2.0 * (2.0 * pi_series(t_prime) / delta_b).ln()
}

/// `w̄_t' = sqrt(2 σ_n² ln(2 π_t' / δ_B)) = σ_n sqrt(ρ_t')`.
pub fn noise_bound(t_prime: u32, delta_b: f64, noise_std: f64) -> f64 {
    noise_std * rho(t_prime, delta_b).sqrt()
}

/// `ψ = |ĵ_t - μ_Dt(θ_t)|`, with the mean taken before the observation is added.
pub fn test_statistic(posterior_mean: f64, observation: f64) -> f64 {
    (observation - posterior_mean).abs()
}

/// Strict comparison `ψ > κ`.
pub fn check(psi: f64, kappa: f64) -> bool {
    psi > kappa
}
