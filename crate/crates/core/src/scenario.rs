//! Scenario files and the built-in catalog.
//!
//! A scenario is a TOML document describing the search grid, the backup
//! controller, the environment (plant with a mode schedule, or a frozen GP
//! sample) and the critical cost. [`Scenario::audit`] sweeps the grid with
//! the noise-free objective and checks that the backup controller is safe in
//! every mode.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::plant::{episode_cost, simulate_episode, Gains, PlantParams};
use crate::env::schedule::{ModeSchedule, ModeSpec};
use crate::env::synthetic::{prior_factor, sample_with_factor, ChangeSpec, ObjectiveTable};
use crate::env::{
    stream_rng, Environment, EnvironmentKind, GainName, ParameterMap, PlantEnvironment, Stream,
    SyntheticEnvironment,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gp::KernelParams;
use crate::grid::{GridDomain, GridSpec};
use crate::optimizer::{
    normalization_scale, prior_std_for, safety_threshold, BetaSchedule, EtsoConfig,
};
use crate::safe_set::Candidates;
use crate::trigger::TriggerConfig;

const CATALOG: [(&str, &str); 5] = [
    ("2dtv", include_str!("../scenarios/2dtv.toml")),
    ("3dtv", include_str!("../scenarios/3dtv.toml")),
    ("ac40", include_str!("../scenarios/ac40.toml")),
    ("ac65", include_str!("../scenarios/ac65.toml")),
    (
        "stationary-gp",
        include_str!("../scenarios/stationary-gp.toml"),
    ),
];

/// Model noise standard deviation in normalized units.
pub const MODEL_NOISE_STD: f64 = 0.016;
/// Prior mean of the normalized cost.
pub const PRIOR_MEAN: f64 = -1.0;
/// Rejection-sampling attempts for a synthetic objective.
const MAX_DRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    #[serde(default)]
    pub description: String,
    /// Number of rounds the environment is defined for.
    pub horizon: u32,
    /// Raw critical cost `J_crit`.
    pub critical_cost: f64,
    /// Environment noise in normalized units.
    pub noise_std: f64,
    pub search: SearchSpace,
    pub environment: EnvironmentSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Expected>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub bounds: Vec<(f64, f64)>,
    pub counts: Vec<usize>,
    pub lengthscales: Vec<f64>,
    /// Gains exposed to the optimizer (plant scenarios).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tuned: Vec<GainName>,
    /// Full backup controller; the tuned entries give the backup point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_gains: Option<Gains>,
    /// Backup point for synthetic scenarios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backup: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    Plant {
        plant: PlantParams,
        /// Episode length, seconds.
        duration: f64,
        #[serde(default = "half")]
        cost_exponent: f64,
        dwell: u32,
        modes: Vec<ModeSpec>,
    },
    GpSample {
        /// Accepted range of the sampled cost at the backup point.
        #[serde(default = "default_band")]
        backup_band: (f64, f64),
        #[serde(default, skip_serializing_if = "Option::is_none")]
        change: Option<ChangeSpec>,
    },
}

fn half() -> f64 {
    0.5
}

fn default_band() -> (f64, f64) {
    (-0.95, 0.95)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChangeClass {
    Stationary,
    /// Changes below the exploit-phase threshold at the incumbent.
    Insignificant,
    /// Changes well above the exploit-phase threshold.
    Significant,
    /// Part of the old safe set crashes after the change.
    SafeSetShift,
}

/// Pinned outcomes of the shipped seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    pub class: ChangeClass,
    /// Fraction of seeds in which the unbounded SafeOpt baseline crashes
    /// within ten rounds of the change.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safeopt_infinite_crash_fraction: Option<f64>,
}

impl Scenario {
    pub fn catalog_ids() -> impl Iterator<Item = &'static str> {
        CATALOG.iter().map(|(id, _)| *id)
    }

    pub fn builtin(id: &str) -> Result<Self> {
        let (_, text) = CATALOG
            .iter()
            .find(|(k, _)| *k == id)
            .ok_or_else(|| Error::UnknownScenario(id.to_string()))?;
        Scenario::from_toml(text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Scenario::from_toml(&text)
    }

    /// A catalog id, or else a path to a scenario file.
    pub fn resolve(name: &str) -> Result<Self> {
        if CATALOG.iter().any(|(k, _)| *k == name) {
            return Scenario::builtin(name);
        }
        let path = Path::new(name);
        if path.exists() {
            return Scenario::load(path);
        }
        Err(Error::UnknownScenario(name.to_string()))
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            bounds: self.search.bounds.clone(),
            counts: self.search.counts.clone(),
        }
    }

    pub fn is_plant(&self) -> bool {
        matches!(self.environment, EnvironmentSpec::Plant { .. })
    }

    pub fn parameter_map(&self) -> Option<ParameterMap> {
        let base = self.search.base_gains?;
        Some(ParameterMap {
            base,
            tuned: self.search.tuned.iter().map(|g| g.index()).collect(),
        })
    }

    /// Backup controller in search coordinates.
    pub fn backup(&self) -> Vec<f64> {
        match (&self.search.backup, self.parameter_map()) {
            (Some(b), _) => b.clone(),
            (None, Some(map)) => map.project(),
            (None, None) => Vec::new(),
        }
    }

    pub fn schedule(&self) -> Option<ModeSchedule> {
        match &self.environment {
            EnvironmentSpec::Plant { dwell, modes, .. } => Some(ModeSchedule {
                modes: modes.clone(),
                dwell: *dwell,
                horizon: self.horizon,
            }),
            EnvironmentSpec::GpSample { .. } => None,
        }
    }

    pub fn change_rounds(&self) -> Vec<u32> {
        match &self.environment {
            EnvironmentSpec::Plant { modes, .. } => modes.iter().skip(1).map(|m| m.start).collect(),
            EnvironmentSpec::GpSample { change, .. } => change.iter().map(|c| c.round).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::config("scenario id is empty"));
        }
        if self.horizon < 2 {
            return Err(Error::config("horizon must be at least 2"));
        }
        if !self.critical_cost.is_finite() {
            return Err(Error::config("critical cost must be finite"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::config("noise_std must be nonnegative"));
        }
        let grid = GridDomain::new(self.grid_spec())?;
        let dim = grid.dim();
        if self.search.lengthscales.len() != dim {
            return Err(Error::config(format!(
                "{} lengthscales for a {dim}-dimensional grid",
                self.search.lengthscales.len()
            )));
        }
        match &self.environment {
            EnvironmentSpec::Plant {
                plant,
                duration,
                cost_exponent,
                ..
            } => {
                if self.search.base_gains.is_none() || self.search.backup.is_some() {
                    return Err(Error::config(
                        "plant scenarios set search.base_gains and no search.backup",
                    ));
                }
                if self.search.tuned.len() != dim {
                    return Err(Error::config(format!(
                        "{} tuned gains for a {dim}-dimensional grid",
                        self.search.tuned.len()
                    )));
                }
                plant.validate()?;
                if !(duration.is_finite() && *duration > 0.0) {
                    return Err(Error::config("episode duration must be positive"));
                }
                if !(*cost_exponent > 0.0 && *cost_exponent <= 1.0) {
                    return Err(Error::config("cost exponent must lie in (0, 1]"));
                }
                self.schedule().expect("plant").validate()?;
                if self.search.bounds.iter().any(|(lo, _)| *lo < 0.0) {
                    return Err(Error::config("gains must be nonnegative"));
                }
            }
            EnvironmentSpec::GpSample {
                backup_band,
                change,
            } => {
                if self.search.backup.is_none() || !self.search.tuned.is_empty() {
                    return Err(Error::config(
                        "synthetic scenarios set search.backup and no tuned gains",
                    ));
                }
                if backup_band.0.partial_cmp(&backup_band.1) != Some(std::cmp::Ordering::Less) {
                    return Err(Error::config("backup_band must be increasing"));
                }
                if let Some(c) = change {
                    if c.round < 2 || c.round > self.horizon {
                        return Err(Error::config("change round must lie in 2..=horizon"));
                    }
                }
            }
        }
        let backup = self.backup();
        if backup.len() != dim || !grid.contains(&backup) {
            return Err(Error::config(format!(
                "backup {backup:?} is outside the search grid"
            )));
        }
        Ok(())
    }

    /// Model kernel; the prior standard deviation is fixed at initialization.
    pub fn kernel(&self) -> KernelParams {
        KernelParams {
            lengthscales: self.search.lengthscales.clone(),
            prior_std: crate::optimizer::MIN_PRIOR_STD,
            noise_std: MODEL_NOISE_STD,
            prior_mean: PRIOR_MEAN,
        }
    }

    /// Optimizer configuration with default constants.
    pub fn etso_config(&self) -> EtsoConfig {
        EtsoConfig {
            backup: self.backup(),
            learn_rounds: 15,
            beta: BetaSchedule::default(),
            epsilon: 0.2,
            trigger: TriggerConfig::default(),
            kernel: self.kernel(),
            grid: self.grid_spec(),
            recompute_safe_set_in_exploit: false,
            expander_candidates: Candidates::default(),
            crash_cost: Some(self.critical_cost),
            execution: Execution::default(),
        }
    }

    /// Seed-independent part of the environment.
    pub fn prepare(&self, config: &EtsoConfig) -> Result<Prepared> {
        self.validate()?;
        let grid = GridDomain::new(self.grid_spec())?;
        let inner = match &self.environment {
            EnvironmentSpec::Plant {
                plant,
                duration,
                cost_exponent,
                ..
            } => {
                let env = PlantEnvironment::new(
                    plant.clone(),
                    self.schedule().expect("plant"),
                    *duration,
                    *cost_exponent,
                    self.parameter_map().expect("plant"),
                )?;
                let (jb, _) = env.mode_cost(0, &self.backup())?;
                PreparedKind::Plant {
                    env,
                    noise_scale: normalization_scale(jb),
                }
            }
            EnvironmentSpec::GpSample {
                backup_band,
                change,
            } => {
                let mut kernel = config.kernel.clone();
                let beta = config.beta.at(1);
                let j_min =
                    safety_threshold(kernel.prior_mean, beta, kernel.noise_std, config.epsilon);
                kernel.prior_std = prior_std_for(kernel.prior_mean, j_min, config.epsilon, beta);
                let factor = prior_factor(&kernel, &grid)?;
                let (backup, _) = grid.nearest(&self.backup(), &kernel.lengthscales)?;
                PreparedKind::Synthetic {
                    factor,
                    prior_mean: kernel.prior_mean,
                    backup,
                    band: *backup_band,
                    change: *change,
                }
            }
        };
        Ok(Prepared {
            grid,
            horizon: self.horizon,
            noise_std: self.noise_std,
            critical_cost: self.critical_cost,
            inner,
        })
    }

    /// Noise-free sweep of every mode over the grid.
    pub fn audit(&self, config: &EtsoConfig) -> Result<Audit> {
        let prepared = self.prepare(config)?;
        let env = match &prepared.inner {
            PreparedKind::Plant { env, .. } => env,
            PreparedKind::Synthetic { .. } => {
                return Ok(Audit {
                    id: self.id.clone(),
                    modes: Vec::new(),
                    changes: Vec::new(),
                    violations: Vec::new(),
                })
            }
        };
        let points = prepared.grid.points();
        let backup = self.backup();
        let beta = config.beta.at(1);
        let j_min_norm = safety_threshold(
            config.kernel.prior_mean,
            beta,
            config.kernel.noise_std,
            config.epsilon,
        );
        let mut modes = Vec::new();
        let mut sweeps = Vec::new();
        let mut violations = Vec::new();
        for (m, spec) in env.schedule.modes.iter().enumerate() {
            let sweep: Vec<(f64, bool)> = config
                .execution
                .map_slice(points, |p| self.audited_cost(env, m, p))
                .into_iter()
                .collect::<Result<_>>()?;
            let (jb, crashed_b) = self.audited_cost(env, m, &backup)?;
            let scale = normalization_scale(jb);
            let j_min_raw = j_min_norm * scale;
            let best = (0..sweep.len())
                .filter(|&i| !sweep[i].1)
                .max_by(|&a, &b| sweep[a].0.total_cmp(&sweep[b].0).then(b.cmp(&a)));
            let step = self.step_change(env, m, &backup)?;
            let crashed = sweep.iter().filter(|s| s.1).count();
            let safe = sweep.iter().filter(|s| !s.1 && s.0 >= j_min_raw).count();
            if crashed_b || jb - config.epsilon * scale < self.critical_cost {
                violations.push(format!(
                    "mode {m}: backup cost {jb:.4} leaves less than epsilon above J_crit {}",
                    self.critical_cost
                ));
            }
            if self.critical_cost > j_min_raw {
                violations.push(format!(
                    "mode {m}: J_crit {} exceeds the raw safety threshold {j_min_raw:.4}",
                    self.critical_cost
                ));
            }
            if step >= 1e-3 {
                violations.push(format!(
                    "mode {m}: halving the time step changes the backup cost by {step:.2e}"
                ));
            }
            modes.push(ModeAudit {
                mode: m,
                start: spec.start,
                backup_cost: jb,
                scale,
                j_min_raw,
                crashed_points: crashed,
                safe_points: safe,
                best_cost: best.map(|i| sweep[i].0).unwrap_or(f64::NAN),
                best_theta: best.map(|i| points[i].clone()).unwrap_or_default(),
                step_change: step,
            });
            sweeps.push(sweep);
        }
        let mut changes = Vec::new();
        for m in 1..modes.len() {
            let (prev, next) = (&sweeps[m - 1], &sweeps[m]);
            let before = &modes[m - 1];
            let tau = modes[m].start;
            // top decile of the old safe set stands in for the incumbent
            let mut safe_costs: Vec<f64> = prev
                .iter()
                .filter(|s| !s.1 && s.0 >= before.j_min_raw)
                .map(|s| s.0)
                .collect();
            safe_costs.sort_by(|a, b| b.total_cmp(a));
            let cut = safe_costs
                .get(safe_costs.len().saturating_sub(1) / 10)
                .copied()
                .unwrap_or(f64::INFINITY);
            let top: Vec<usize> = (0..prev.len())
                .filter(|&i| !prev[i].1 && prev[i].0 >= cut)
                .collect();
            let delta = |i: usize| (next[i].0 - prev[i].0).abs();
            let incumbent = (0..prev.len())
                .filter(|&i| !prev[i].1)
                .max_by(|&a, &b| prev[a].0.total_cmp(&prev[b].0).then(b.cmp(&a)));
            let shifted = (0..prev.len())
                .filter(|&i| !prev[i].1 && prev[i].0 >= before.j_min_raw && next[i].1)
                .count();
            let top_crashes = top.iter().filter(|&&i| next[i].1).count();
            let incumbent_crashes = incumbent.is_some_and(|i| next[i].1);
            // incumbent re-queried once per exploit round before the change
            let exploit_rounds = tau.saturating_sub(config.learn_rounds).max(1);
            let exploit_std = config.kernel.noise_std / f64::from(exploit_rounds).sqrt();
            changes.push(ChangeAudit {
                round: tau,
                incumbent: incumbent.map(|i| points[i].clone()).unwrap_or_default(),
                delta_at_incumbent: incumbent.map(delta).unwrap_or(f64::NAN),
                top_delta_min: top.iter().map(|&i| delta(i)).fold(f64::INFINITY, f64::min),
                top_delta_max: top.iter().map(|&i| delta(i)).fold(0.0, f64::max),
                top_crashes,
                incumbent_crashes,
                kappa_floor: config.trigger.threshold(tau, 0.0) * before.scale,
                kappa_exploit: config.trigger.threshold(tau, exploit_std) * before.scale,
                shifted_points: shifted,
            });
        }
        Ok(Audit {
            id: self.id.clone(),
            modes,
            changes,
            violations,
        })
    }

    fn audited_cost(
        &self,
        env: &PlantEnvironment,
        mode: usize,
        theta: &[f64],
    ) -> Result<(f64, bool)> {
        let (cost, crashed) = env.mode_cost(mode, theta)?;
        let crashed = crashed || !cost.is_finite() || cost <= self.critical_cost;
        Ok((if crashed { self.critical_cost } else { cost }, crashed))
    }

    /// Relative cost change at `theta` when the integration step is halved.
    fn step_change(&self, env: &PlantEnvironment, mode: usize, theta: &[f64]) -> Result<f64> {
        let gains = env.map.gains(theta)?;
        let reference = &env.references[mode];
        let mut fine = env.plant(mode);
        fine.params.time_step /= 2.0;
        let coarse = env.mode_cost(mode, theta)?.0;
        let ep = simulate_episode(&fine, &gains, reference)?;
        let refined = episode_cost(&ep.samples, &reference.waypoints, env.cost_exponent)?;
        Ok(((refined - coarse) / coarse).abs())
    }
}

/// Environment data shared by every seed of a scenario.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub grid: GridDomain,
    pub horizon: u32,
    pub noise_std: f64,
    pub critical_cost: f64,
    inner: PreparedKind,
}

#[derive(Debug, Clone)]
enum PreparedKind {
    Plant {
        env: PlantEnvironment,
        noise_scale: f64,
    },
    Synthetic {
        factor: DMatrix<f64>,
        prior_mean: f64,
        backup: usize,
        band: (f64, f64),
        change: Option<ChangeSpec>,
    },
}

impl Prepared {
    /// Environment for one run. Plant environments ignore the seed;
    /// synthetic objectives are redrawn until the backup cost is in band.
    pub fn environment(&self, seed: u64) -> Result<Environment> {
        let (kind, noise_scale) = match &self.inner {
            PreparedKind::Plant { env, noise_scale } => {
                (EnvironmentKind::Plant(env.clone()), *noise_scale)
            }
            PreparedKind::Synthetic {
                factor,
                prior_mean,
                backup,
                band,
                change,
            } => {
                let mut rng = stream_rng(seed, Stream::Objective, 0, 0);
                let table = draw_in_band(factor, *prior_mean, *backup, *band, *change, &mut rng)?;
                let env = SyntheticEnvironment {
                    grid: self.grid.clone(),
                    table,
                    horizon: self.horizon,
                };
                (EnvironmentKind::Synthetic(env), 1.0)
            }
        };
        Ok(Environment {
            kind,
            noise_std: self.noise_std,
            noise_scale,
            critical_cost: self.critical_cost,
        })
    }
}

fn draw_in_band<R: Rng + ?Sized>(
    factor: &DMatrix<f64>,
    prior_mean: f64,
    backup: usize,
    band: (f64, f64),
    change: Option<ChangeSpec>,
    rng: &mut R,
) -> Result<ObjectiveTable> {
    for _ in 0..MAX_DRAWS {
        let table = sample_with_factor(factor, prior_mean, rng, change);
        let in_band = |v: f64| v >= band.0 && v <= band.1;
        let after_ok = table.after.as_ref().is_none_or(|(_, t)| in_band(t[backup]));
        if in_band(table.before[backup]) && after_ok {
            return Ok(table);
        }
    }
    Err(Error::config(format!(
        "no objective sample with the backup cost in [{}, {}] after {MAX_DRAWS} draws",
        band.0, band.1
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeAudit {
    pub mode: usize,
    pub start: u32,
    pub backup_cost: f64,
    pub scale: f64,
    pub j_min_raw: f64,
    pub crashed_points: usize,
    /// Grid points with a true cost at or above `j_min_raw`.
    pub safe_points: usize,
    pub best_cost: f64,
    pub best_theta: Vec<f64>,
    pub step_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangeAudit {
    pub round: u32,
    /// Best point of the previous mode.
    pub incumbent: Vec<f64>,
    pub delta_at_incumbent: f64,
    /// Extremes of `|ΔJ|` over the top decile of the previous safe set.
    pub top_delta_min: f64,
    pub top_delta_max: f64,
    /// Top-decile points that crash after the change.
    pub top_crashes: usize,
    pub incumbent_crashes: bool,
    /// Exploit-phase threshold in raw units with zero posterior spread.
    pub kappa_floor: f64,
    /// Same with the spread left after re-querying the incumbent in every
    /// exploit round before the change.
    pub kappa_exploit: f64,
    /// Points safe before the change that crash after it.
    pub shifted_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Audit {
    pub id: String,
    pub modes: Vec<ModeAudit>,
    pub changes: Vec<ChangeAudit>,
    pub violations: Vec<String>,
}

impl Audit {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// Whether the sweep agrees with a declared change class.
    pub fn matches(&self, class: ChangeClass) -> bool {
        match class {
            ChangeClass::Stationary => self.changes.is_empty(),
            ChangeClass::Insignificant => {
                self.changes.iter().all(|c| c.top_delta_max < c.kappa_floor)
            }
            ChangeClass::Significant => self
                .changes
                .iter()
                .all(|c| c.delta_at_incumbent >= 5.0 * c.kappa_exploit),
            ChangeClass::SafeSetShift => self
                .changes
                .iter()
                .all(|c| c.shifted_points > 0 && !c.incumbent_crashes),
        }
    }
}
