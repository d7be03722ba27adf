//! Time-varying environments: the closed-loop tracking plant under a mode
//! schedule, and frozen GP-sample objectives.
//!
//! Environments are immutable once built. [`Environment::evaluate`] is a pure
//! function of `(round, θ)` and the noise generator it is handed.

pub mod plant;
pub mod reference;
pub mod schedule;
pub mod synthetic;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridDomain;
use plant::{episode_cost, simulate_episode, Gains, Plant, PlantParams};
use reference::ReferenceTrajectory;
use schedule::ModeSchedule;
use synthetic::ObjectiveTable;

/// Result of one environment query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// What the optimizer sees, raw units.
    pub noisy_cost: f64,
    /// Noise-free cost, for logging and auditing only.
    pub true_cost: f64,
    pub crashed: bool,
    pub mode: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainName {
    PXy,
    PZ,
    IXy,
    IZ,
}

impl GainName {
    pub fn index(self) -> usize {
        match self {
            GainName::PXy => 0,
            GainName::PZ => 1,
            GainName::IXy => 2,
            GainName::IZ => 3,
        }
    }
}

/// Embeds a search-space point into the full four-gain controller.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterMap {
    pub base: Gains,
    pub tuned: Vec<usize>,
}

impl ParameterMap {
    pub fn gains(&self, theta: &[f64]) -> Result<Gains> {
        if theta.len() != self.tuned.len() {
            return Err(Error::Dimension {
                expected: self.tuned.len(),
                got: theta.len(),
            });
        }
        let mut g = self.base;
        for (&i, &v) in self.tuned.iter().zip(theta) {
            g[i] = v;
        }
        Ok(g)
    }

    /// Search-space coordinates of the base controller.
    pub fn project(&self) -> Vec<f64> {
        self.tuned.iter().map(|&i| self.base[i]).collect()
    }
}

/// Waypoint tracking with a point-mass plant under a mode schedule.
#[derive(Debug, Clone)]
pub struct PlantEnvironment {
    pub params: PlantParams,
    pub schedule: ModeSchedule,
    pub references: Vec<ReferenceTrajectory>,
    pub cost_exponent: f64,
    pub map: ParameterMap,
}

impl PlantEnvironment {
    pub fn new(
        params: PlantParams,
        schedule: ModeSchedule,
        duration: f64,
        cost_exponent: f64,
        map: ParameterMap,
    ) -> Result<Self> {
        params.validate()?;
        schedule.validate()?;
        if !(cost_exponent > 0.0 && cost_exponent <= 1.0) {
            return Err(Error::config(format!(
                "cost exponent {cost_exponent} must lie in (0, 1]"
            )));
        }
        let references = schedule
            .modes
            .iter()
            .map(|m| m.reference.trajectory(duration))
            .collect::<Result<Vec<_>>>()?;
        Ok(PlantEnvironment {
            params,
            schedule,
            references,
            cost_exponent,
            map,
        })
    }

    pub fn plant(&self, mode: usize) -> Plant {
        Plant {
            params: self.params.clone(),
            gain_factor: self.schedule.modes[mode].gain_factor,
        }
    }

    /// Noise-free cost of `theta` in `mode` and whether the episode crashed.
    pub fn mode_cost(&self, mode: usize, theta: &[f64]) -> Result<(f64, bool)> {
        let gains = self.map.gains(theta)?;
        let reference = &self.references[mode];
        let episode = simulate_episode(&self.plant(mode), &gains, reference)?;
        let cost = episode_cost(&episode.samples, &reference.waypoints, self.cost_exponent)?;
        Ok((cost, episode.crashed))
    }
}

/// Frozen GP sample evaluated at grid points.
#[derive(Debug, Clone)]
pub struct SyntheticEnvironment {
    pub grid: GridDomain,
    pub table: ObjectiveTable,
    pub horizon: u32,
}

impl SyntheticEnvironment {
    fn index_of(&self, theta: &[f64]) -> Result<usize> {
        let unit = vec![1.0; self.grid.dim()];
        let (i, d) = self.grid.nearest(theta, &unit)?;
        if d > 1e-9 {
            return Err(Error::domain(format!("{theta:?} is not a grid point")));
        }
        Ok(i)
    }
}

#[derive(Debug, Clone)]
pub enum EnvironmentKind {
    Plant(PlantEnvironment),
    Synthetic(SyntheticEnvironment),
}

#[derive(Debug, Clone)]
pub struct Environment {
    pub kind: EnvironmentKind,
    /// Observation noise standard deviation, normalized units.
    pub noise_std: f64,
    /// Raw cost per normalized unit, used to express the noise in raw units.
    pub noise_scale: f64,
    /// Raw critical cost `J_crit`.
    pub critical_cost: f64,
}

impl Environment {
    pub fn horizon(&self) -> u32 {
        match &self.kind {
            EnvironmentKind::Plant(p) => p.schedule.horizon,
            EnvironmentKind::Synthetic(s) => s.horizon,
        }
    }

    pub fn mode_at(&self, round: u32) -> Result<usize> {
        match &self.kind {
            EnvironmentKind::Plant(p) => p.schedule.mode_at(round),
            EnvironmentKind::Synthetic(s) => {
                if round > s.horizon {
                    return Err(Error::domain(format!(
                        "round {round} exceeds the horizon {}",
                        s.horizon
                    )));
                }
                Ok(match &s.table.after {
                    Some((tau, _)) if round >= *tau => 1,
                    _ => 0,
                })
            }
        }
    }

    /// Rounds at which the environment changes.
    pub fn change_rounds(&self) -> Vec<u32> {
        match &self.kind {
            EnvironmentKind::Plant(p) => p.schedule.change_rounds(),
            EnvironmentKind::Synthetic(s) => s.table.after.iter().map(|(tau, _)| *tau).collect(),
        }
    }

    /// Noise-free cost at `round`; crashes are clamped to `J_crit`.
    pub fn true_cost(&self, round: u32, theta: &[f64]) -> Result<(f64, bool, usize)> {
        let mode = self.mode_at(round)?;
        let (cost, crashed) = match &self.kind {
            EnvironmentKind::Plant(p) => p.mode_cost(mode, theta)?,
            EnvironmentKind::Synthetic(s) => (s.table.at(round, s.index_of(theta)?), false),
        };
        let crashed = crashed || !cost.is_finite() || cost <= self.critical_cost;
        let cost = if crashed { self.critical_cost } else { cost };
        Ok((cost, crashed, mode))
    }

    /// `ĵ = J(θ) + w`, `w ~ N(0, (σ · scale)²)`. Crashes report `J_crit`.
    pub fn evaluate<R: Rng + ?Sized>(
        &self,
        round: u32,
        theta: &[f64],
        rng: &mut R,
    ) -> Result<Evaluation> {
        let (true_cost, crashed, mode) = self.true_cost(round, theta)?;
        let w: f64 = rng.sample(StandardNormal);
        let noisy_cost = if crashed {
            true_cost
        } else {
            true_cost + self.noise_std * self.noise_scale * w
        };
        Ok(Evaluation {
            noisy_cost,
            true_cost,
            crashed,
            mode,
        })
    }
}

/// Named independent random streams derived from a run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Objective = 1,
    Noise = 2,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for one `(seed, stream, round, slot)` tuple. Policies that
/// query different points still see identical noise draws per round.
pub fn stream_rng(seed: u64, stream: Stream, round: u32, slot: u32) -> ChaCha8Rng {
    let key = splitmix(
        splitmix(splitmix(seed) ^ stream as u64) ^ (u64::from(round) << 8 | u64::from(slot)),
    );
    ChaCha8Rng::seed_from_u64(key)
}
