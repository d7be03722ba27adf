//! Event-triggered SafeOpt and its baselines behind one step interface:
//! [`Optimizer::next_query`], [`Optimizer::observe`] and
//! [`Optimizer::reset_commit`].
//!
//! Costs are normalized by `⌈|ĵ_B|⌉` of the latest backup observation. The
//! prior mean is fixed (default -1) and the safety threshold and prior
//! standard deviation follow from it:
//! `j_min = μ_D0 - β σ_n - ε`, `σ_D0 = max((μ_D0 - j_min + ε)/β, 1/3)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gp::{Dataset, GpModel, KernelParams, Posterior};
use crate::grid::{GridDomain, GridSpec};
use crate::safe_set::{self, Candidates, ExpanderInputs, SetMasks};
use crate::trigger::{self, TriggerConfig};

/// Smallest prior standard deviation allowed by the initialization rule.
pub const MIN_PRIOR_STD: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Explore for `T_L` rounds, then exploit; the trigger may reset.
    Etso,
    /// Same learning budget, trigger disabled.
    #[serde(rename = "safeopt-budget")]
    SafeOptBudget,
    /// Explores forever, trigger disabled.
    #[serde(rename = "safeopt-infinite")]
    SafeOptInfinite,
    /// Always queries the backup controller.
    BackupOnly,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Etso,
        PolicyKind::SafeOptBudget,
        PolicyKind::SafeOptInfinite,
        PolicyKind::BackupOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Etso => "etso",
            PolicyKind::SafeOptBudget => "safeopt-budget",
            PolicyKind::SafeOptInfinite => "safeopt-infinite",
            PolicyKind::BackupOnly => "backup-only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        PolicyKind::ALL.into_iter().find(|p| p.name() == s)
    }

    fn uses_trigger(self) -> bool {
        self == PolicyKind::Etso
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Confidence-bound multiplier per epoch round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BetaSchedule {
    Constant {
        value: f64,
    },
    /// `value * sqrt(1 + ln t')`; equals `value` at `t' = 1`.
    Logarithmic {
        value: f64,
    },
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule::Constant { value: 2.0 }
    }
}

impl BetaSchedule {
    pub fn at(&self, t_prime: u32) -> f64 {
        match *self {
            BetaSchedule::Constant { value } => value,
            BetaSchedule::Logarithmic { value } => {
                value * (1.0 + f64::from(t_prime.max(1)).ln()).sqrt()
            }
        }
    }

    fn initial(&self) -> f64 {
        self.at(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtsoConfig {
    /// Backup controller in grid coordinates.
    pub backup: Vec<f64>,
    pub learn_rounds: u32,
    pub beta: BetaSchedule,
    pub epsilon: f64,
    pub trigger: TriggerConfig,
    /// `prior_std` is recomputed at initialization.
    pub kernel: KernelParams,
    pub grid: GridSpec,
    /// Re-derive the safe set during exploitation instead of freezing it.
    pub recompute_safe_set_in_exploit: bool,
    #[serde(default)]
    pub expander_candidates: Candidates,
    /// Raw critical cost; backup observations at or below it abort the run
    /// and non-finite observations are recorded as this value.
    pub crash_cost: Option<f64>,
    pub execution: Execution,
}

impl EtsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learn_rounds <= 1 {
            return Err(Error::config(format!(
                "learn_rounds = {} must exceed 1",
                self.learn_rounds
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::config(format!(
                "epsilon = {} must be positive",
                self.epsilon
            )));
        }
        let beta = self.beta.initial();
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::config(format!("beta = {beta} must be positive")));
        }
        self.trigger.validate()?;
        self.kernel.validate()?;
        if self.kernel.dim() != self.grid.counts.len()
            || self.backup.len() != self.grid.counts.len()
        {
            return Err(Error::config(format!(
                "kernel has {} lengthscales, grid {} dimensions, backup {} entries",
                self.kernel.dim(),
                self.grid.counts.len(),
                self.backup.len()
            )));
        }
        Ok(())
    }
}

/// Normalization divisor `⌈|ĵ_B|⌉`, floored at 1.
pub fn normalization_scale(raw_backup_cost: f64) -> f64 {
    raw_backup_cost.abs().ceil().max(1.0)
}

/// Safety threshold in normalized units: `μ_D0 - β σ_n - ε`.
pub fn safety_threshold(prior_mean: f64, beta: f64, noise_std: f64, epsilon: f64) -> f64 {
    prior_mean - beta * noise_std - epsilon
}

/// Prior standard deviation: `max((μ_D0 - j_min + ε)/β, 1/3)`.
pub fn prior_std_for(prior_mean: f64, j_min: f64, epsilon: f64, beta: f64) -> f64 {
    ((prior_mean - j_min + epsilon) / beta).max(MIN_PRIOR_STD)
}

/// Performance relative to the initial backup cost:
/// `(J_B0 - J_t) / J_B0`. Zero means backup-equivalent.
pub fn normalized_performance(j_backup_initial: f64, j_current: f64) -> Result<f64> {
    if j_backup_initial == 0.0 || !j_backup_initial.is_finite() {
        return Err(Error::domain(
            "initial backup cost must be finite and nonzero",
        ));
    }
    // `+ 0.0` turns a negative zero into zero.
    Ok((j_backup_initial - j_current) / j_backup_initial + 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Learning,
    Exploiting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    /// The trigger fired; the environment must evaluate the backup next
    /// and hand the result to [`Optimizer::reset_commit`].
    ResetRequested { psi: f64, kappa: f64 },
    /// `G_t ∪ M_t` was empty; the query fell back to the best safe mean.
    ExploreFallback,
    /// No safe grid point remained; the backup was queried.
    SafeSetCollapse,
    /// A non-finite cost was reported and replaced by the crash cost.
    CrashObserved { recorded_cost: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingQuery {
    pub index: usize,
    pub theta: Vec<f64>,
    /// Posterior mean and standard deviation at the query, before the
    /// observation joins the data.
    pub prior_mean: f64,
    pub prior_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingReset {
    pub theta: Vec<f64>,
    pub raw_cost: f64,
}

/// Everything needed to resume an optimizer; serializes as a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtsoState {
    pub dataset: Dataset,
    /// Global round counter (number of completed observations).
    pub t: u32,
    /// Rounds since the last reset, starting at 1.
    pub t_prime: u32,
    /// Safety threshold in normalized units.
    pub j_min_t: f64,
    /// Normalization divisor.
    pub scale: f64,
    pub phase: Phase,
    pub last_query: Option<usize>,
    pub pending_query: Option<PendingQuery>,
    pub pending_reset: Option<PendingReset>,
    /// Safe mask from the last round with `t' ≤ T_L`.
    pub frozen_safe: Option<Vec<bool>>,
}

/// Per-query diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub index: usize,
    pub theta: Vec<f64>,
    pub phase: Phase,
    /// Size of the safe mask the selection was made from.
    pub safe_size: usize,
    /// Whether the chosen point belonged to that mask.
    pub selected_in_safe_set: bool,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapInfo {
    pub requested: Vec<f64>,
    pub snapped: Vec<f64>,
    pub scaled_distance: f64,
}

pub struct Optimizer {
    config: EtsoConfig,
    policy: PolicyKind,
    grid: GridDomain,
    kernel: KernelParams,
    backup_index: usize,
    snap: Option<SnapInfo>,
    state: EtsoState,
}

impl Optimizer {
    /// Starts an epoch from the backup observation.
    pub fn initialize(
        config: EtsoConfig,
        policy: PolicyKind,
        raw_backup_cost: f64,
    ) -> Result<Self> {
        config.validate()?;
        let grid = GridDomain::new(config.grid.clone())?;
        let (backup_index, dist) = grid.nearest(&config.backup, &config.kernel.lengthscales)?;
        let snap = (dist > 0.0).then(|| SnapInfo {
            requested: config.backup.clone(),
            snapped: grid.point(backup_index).to_vec(),
            scaled_distance: dist,
        });
        check_backup_cost(&config, raw_backup_cost)?;

        let beta0 = config.beta.initial();
        let j_min_t = safety_threshold(
            config.kernel.prior_mean,
            beta0,
            config.kernel.noise_std,
            config.epsilon,
        );
        let mut kernel = config.kernel.clone();
        kernel.prior_std = prior_std_for(kernel.prior_mean, j_min_t, config.epsilon, beta0);

        let scale = normalization_scale(raw_backup_cost);
        let mut dataset = Dataset::new();
        dataset.push(grid.point(backup_index).to_vec(), raw_backup_cost / scale)?;

        Ok(Optimizer {
            state: EtsoState {
                dataset,
                t: 0,
                t_prime: 1,
                j_min_t,
                scale,
                phase: Phase::Learning,
                last_query: None,
                pending_query: None,
                pending_reset: None,
                frozen_safe: None,
            },
            config,
            policy,
            grid,
            kernel,
            backup_index,
            snap,
        })
    }

    /// Rebuilds an optimizer from a checkpointed state.
    pub fn restore(config: EtsoConfig, policy: PolicyKind, state: EtsoState) -> Result<Self> {
        config.validate()?;
        let grid = GridDomain::new(config.grid.clone())?;
        let (backup_index, dist) = grid.nearest(&config.backup, &config.kernel.lengthscales)?;
        let snap = (dist > 0.0).then(|| SnapInfo {
            requested: config.backup.clone(),
            snapped: grid.point(backup_index).to_vec(),
            scaled_distance: dist,
        });
        let beta0 = config.beta.initial();
        let mut kernel = config.kernel.clone();
        kernel.prior_std = prior_std_for(kernel.prior_mean, state.j_min_t, config.epsilon, beta0);
        Ok(Optimizer {
            config,
            policy,
            grid,
            kernel,
            backup_index,
            snap,
            state,
        })
    }

    pub fn config(&self) -> &EtsoConfig {
        &self.config
    }

    pub fn policy(&self) -> PolicyKind {
        self.policy
    }

    pub fn grid(&self) -> &GridDomain {
        &self.grid
    }

    /// Kernel with the prior standard deviation actually in use.
    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn state(&self) -> &EtsoState {
        &self.state
    }

    pub fn backup_index(&self) -> usize {
        self.backup_index
    }

    pub fn backup_theta(&self) -> &[f64] {
        self.grid.point(self.backup_index)
    }

    pub fn backup_snap(&self) -> Option<&SnapInfo> {
        self.snap.as_ref()
    }

    /// Safety threshold in raw cost units.
    pub fn j_min_raw(&self) -> f64 {
        self.state.j_min_t * self.state.scale
    }

    pub fn checkpoint(&self) -> String {
        serde_json::to_string_pretty(&self.state).expect("state serializes")
    }

    pub fn beta(&self) -> f64 {
        self.config.beta.at(self.state.t_prime)
    }

    fn is_learning(&self) -> bool {
        match self.policy {
            PolicyKind::SafeOptInfinite => true,
            PolicyKind::BackupOnly => false,
            _ => self.state.t_prime < self.config.learn_rounds,
        }
    }

    fn sets_active(&self) -> bool {
        self.policy == PolicyKind::SafeOptInfinite || self.state.t_prime <= self.config.learn_rounds
    }

    /// Bounded posterior of the current dataset over the whole grid.
    pub fn grid_posterior(&self) -> Result<Posterior> {
        let model = GpModel::fit(&self.kernel, &self.state.dataset)?;
        Ok(model
            .predict(self.grid.points(), self.config.execution)?
            .confidence_bounds(self.beta()))
    }

    /// Safe, maximizer and expander masks for the current dataset.
    pub fn compute_masks(&self) -> Result<SetMasks> {
        let model = GpModel::fit(&self.kernel, &self.state.dataset)?;
        let mut wp = model.predict_whitened(self.grid.points(), self.config.execution)?;
        wp.posterior = std::mem::take(&mut wp.posterior).confidence_bounds(self.beta());
        self.masks_from(&model, &wp, true)
    }

    fn masks_from(
        &self,
        model: &GpModel,
        wp: &crate::gp::WhitenedPosterior,
        with_expanders: bool,
    ) -> Result<SetMasks> {
        let post = &wp.posterior;
        let safe = safe_set::compute_safe_set(post, self.state.j_min_t)?;
        if !safe.iter().any(|s| *s) {
            let n = safe.len();
            return Ok(SetMasks {
                safe,
                maximizers: vec![false; n],
                expanders: vec![false; n],
            });
        }
        let maximizers = safe_set::compute_maximizers(post, &safe)?;
        let expanders = if with_expanders {
            ExpanderInputs {
                params: &self.kernel,
                grid: &self.grid,
                posterior: wp,
                safe: &safe,
                j_min: self.state.j_min_t,
                beta: self.beta(),
                jitter: model.jitter(),
                candidates: self.config.expander_candidates,
            }
            .compute(self.config.execution)
        } else {
            vec![false; safe.len()]
        };
        Ok(SetMasks {
            safe,
            maximizers,
            expanders,
        })
    }

    /// Selects the next parameter vector (grid coordinates).
    pub fn next_query(&mut self) -> Result<Query> {
        if self.state.pending_reset.is_some() {
            return Err(Error::domain(
                "a reset is pending; commit it before querying",
            ));
        }
        if self.policy == PolicyKind::BackupOnly {
            let (mean, std) = GpModel::fit(&self.kernel, &self.state.dataset)?
                .predict_one(self.backup_theta())?;
            return Ok(self.select(
                self.backup_index,
                Phase::Exploiting,
                1,
                true,
                mean,
                std.sqrt(),
                Vec::new(),
            ));
        }

        let model = GpModel::fit(&self.kernel, &self.state.dataset)?;
        let mut wp = model.predict_whitened(self.grid.points(), self.config.execution)?;
        wp.posterior = std::mem::take(&mut wp.posterior).confidence_bounds(self.beta());
        let learning = self.is_learning();
        let mut events = Vec::new();

        let mut masks = None;
        if self.sets_active() {
            let m = self.masks_from(&model, &wp, learning)?;
            self.state.frozen_safe = Some(m.safe.clone());
            masks = Some(m);
        } else if self.config.recompute_safe_set_in_exploit {
            masks = Some(self.masks_from(&model, &wp, false)?);
        }

        let post = &wp.posterior;
        let (phase, choice, safe_mask) = if learning {
            let m = masks.as_ref().expect("sets are computed while learning");
            let choice = match safe_set::acquire_explore(post, m) {
                Some(i) => Some(i),
                None => {
                    events.push(Event::ExploreFallback);
                    safe_set::acquire_exploit(post, &m.safe)
                }
            };
            (Phase::Learning, choice, m.safe.clone())
        } else {
            let safe = match &masks {
                Some(m) if self.config.recompute_safe_set_in_exploit || self.sets_active() => {
                    m.safe.clone()
                }
                _ => self.state.frozen_safe.clone().unwrap_or_default(),
            };
            (
                Phase::Exploiting,
                safe_set::acquire_exploit(post, &safe),
                safe,
            )
        };

        let index = match choice {
            Some(i) => i,
            None => {
                events.push(Event::SafeSetCollapse);
                self.backup_index
            }
        };
        let safe_size = safe_set::count(&safe_mask);
        let in_safe = safe_mask.get(index).copied().unwrap_or(false);
        let (mean, std) = (post.mean[index], post.std_dev[index]);
        Ok(self.select(index, phase, safe_size, in_safe, mean, std, events))
    }

    #[allow(clippy::too_many_arguments)]
    fn select(
        &mut self,
        index: usize,
        phase: Phase,
        safe_size: usize,
        in_safe: bool,
        mean: f64,
        std: f64,
        events: Vec<Event>,
    ) -> Query {
        let theta = self.grid.point(index).to_vec();
        self.state.phase = phase;
        self.state.last_query = Some(index);
        self.state.pending_query = Some(PendingQuery {
            index,
            theta: theta.clone(),
            prior_mean: mean,
            prior_std: std,
        });
        Query {
            index,
            theta,
            phase,
            safe_size,
            selected_in_safe_set: in_safe,
            events,
        }
    }

    /// Feeds back the raw cost of the pending query.
    pub fn observe(&mut self, raw_cost: f64) -> Result<Vec<Event>> {
        let pending = self
            .state
            .pending_query
            .take()
            .ok_or_else(|| Error::domain("observe called without a pending query"))?;
        let mut events = Vec::new();
        let mut crashed = false;
        let raw = if raw_cost.is_finite() {
            raw_cost
        } else {
            crashed = true;
            let recorded = self.config.crash_cost.unwrap_or_else(|| self.j_min_raw());
            events.push(Event::CrashObserved {
                recorded_cost: recorded,
            });
            recorded
        };
        self.state.t += 1;

        if self.policy == PolicyKind::BackupOnly {
            return Ok(events);
        }

        let y = raw / self.state.scale;
        if self.policy.uses_trigger() {
            let psi = trigger::test_statistic(pending.prior_mean, y);
            let kappa = self
                .config
                .trigger
                .threshold(self.state.t_prime, pending.prior_std);
            if crashed || trigger::check(psi, kappa) {
                self.state.pending_reset = Some(PendingReset {
                    theta: pending.theta,
                    raw_cost: raw,
                });
                events.push(Event::ResetRequested { psi, kappa });
                return Ok(events);
            }
        }
        self.state.dataset.push(pending.theta, y)?;
        self.state.t_prime += 1;
        Ok(events)
    }

    /// Completes a reset with a fresh backup observation: the dataset
    /// becomes the backup pair plus the triggering pair and `t' = 2`.
    pub fn reset_commit(&mut self, raw_backup_cost: f64) -> Result<()> {
        let pending = self
            .state
            .pending_reset
            .take()
            .ok_or_else(|| Error::domain("reset_commit called without a pending reset"))?;
        if let Err(e) = check_backup_cost(&self.config, raw_backup_cost) {
            self.state.pending_reset = Some(pending);
            return Err(e);
        }
        let scale = normalization_scale(raw_backup_cost);
        let mut dataset = Dataset::new();
        dataset.push(self.backup_theta().to_vec(), raw_backup_cost / scale)?;
        dataset.push(pending.theta, pending.raw_cost / scale)?;
        self.state.dataset = dataset;
        self.state.scale = scale;
        self.state.j_min_t = safety_threshold(
            self.kernel.prior_mean,
            self.config.beta.initial(),
            self.kernel.noise_std,
            self.config.epsilon,
        );
        self.state.t_prime = 2;
        self.state.frozen_safe = None;
        self.state.phase = Phase::Learning;
        Ok(())
    }

    pub fn reset_pending(&self) -> bool {
        self.state.pending_reset.is_some()
    }
}

fn check_backup_cost(config: &EtsoConfig, raw: f64) -> Result<()> {
    if !raw.is_finite() {
        return Err(Error::BackupUnsafe(format!(
            "backup cost {raw} is not finite"
        )));
    }
    if let Some(crit) = config.crash_cost {
        if raw <= crit {
            return Err(Error::BackupUnsafe(format!(
                "backup cost {raw} is at or below the critical cost {crit}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trigger::ThresholdScaling;

    fn config_1d() -> EtsoConfig {
        EtsoConfig {
            backup: vec![0.5],
            learn_rounds: 4,
            beta: BetaSchedule::default(),
            epsilon: 0.2,
            trigger: TriggerConfig::default(),
            kernel: KernelParams::new(vec![0.2], 1.0 / 3.0, 0.016, -1.0).unwrap(),
            grid: GridSpec {
                bounds: vec![(0.0, 1.0)],
                counts: vec![21],
            },
            recompute_safe_set_in_exploit: false,
            expander_candidates: Candidates::Boundary,
            crash_cost: Some(-10.0),
            execution: Execution::Sequential,
        }
    }

    #[test]
    fn default_constant_chain() {
        let j_min = safety_threshold(-1.0, 2.0, 0.016, 0.2);
        assert!((j_min + 1.232).abs() < 1e-12);
        let sd = prior_std_for(-1.0, j_min, 0.2, 2.0);
        assert!((sd - 1.0 / 3.0).abs() < 1e-12);
        // uninformed lower bound sits below the threshold
        assert!(-1.0 - 2.0 * sd < j_min);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalization_scale(-3.7), 4.0);
        assert_eq!(normalization_scale(-7.2), 8.0);
        assert_eq!(normalization_scale(-0.4), 1.0);
        assert_eq!(normalization_scale(0.0), 1.0);
        let opt = Optimizer::initialize(config_1d(), PolicyKind::Etso, -3.7).unwrap();
        assert_eq!(opt.state().scale, 4.0);
        assert!((opt.state().dataset.points()[0].y + 0.925).abs() < 1e-15);
        assert_eq!(opt.state().t_prime, 1);
    }

    #[test]
    fn normalized_performance_formula() {
        assert!((normalized_performance(-4.0, -2.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(normalized_performance(-4.0, -4.0).unwrap(), 0.0);
        assert!(normalized_performance(-4.0, -5.0).unwrap() < 0.0);
        assert!(normalized_performance(0.0, -1.0).is_err());
    }

    #[test]
    fn backup_below_critical_cost_is_rejected() {
        let err = Optimizer::initialize(config_1d(), PolicyKind::Etso, -12.0);
        assert!(matches!(err, Err(Error::BackupUnsafe(_))));
    }

    #[test]
    fn invalid_learn_rounds() {
        let mut cfg = config_1d();
        cfg.learn_rounds = 1;
        assert!(Optimizer::initialize(cfg, PolicyKind::Etso, -3.0).is_err());
    }

    #[test]
    fn first_query_is_safe_and_explorable() {
        let mut opt = Optimizer::initialize(config_1d(), PolicyKind::Etso, -3.0).unwrap();
        let masks = opt.compute_masks().unwrap();
        assert!(masks.safe[opt.backup_index()]);
        let q = opt.next_query().unwrap();
        assert_eq!(q.phase, Phase::Learning);
        assert!(masks.maximizers[q.index] || masks.expanders[q.index]);
        assert!(q.selected_in_safe_set);
    }

    #[test]
    fn exact_prediction_grows_dataset() {
        let mut opt = Optimizer::initialize(config_1d(), PolicyKind::Etso, -3.0).unwrap();
        opt.next_query().unwrap();
        let mean = opt.state().pending_query.as_ref().unwrap().prior_mean;
        let events = opt.observe(mean * opt.state().scale).unwrap();
        assert!(events.is_empty());
        assert_eq!(opt.state().dataset.len(), 2);
        assert_eq!(opt.state().t_prime, 2);
    }

    #[test]
    fn deviation_requests_reset_and_commit_rebuilds_dataset() {
        let mut cfg = config_1d();
        cfg.trigger.scaling = ThresholdScaling::Scaled;
        let mut opt = Optimizer::initialize(cfg, PolicyKind::Etso, -3.0).unwrap();
        let q = opt.next_query().unwrap();
        let events = opt.observe(-0.2 * 3.0 - 10.0 * 0.0 - 6.0).unwrap();
        assert!(matches!(events[0], Event::ResetRequested { .. }));
        assert_eq!(opt.state().dataset.len(), 1);
        assert!(opt.next_query().is_err());
        opt.reset_commit(-7.2).unwrap();
        assert_eq!(opt.state().scale, 8.0);
        assert_eq!(opt.state().dataset.len(), 2);
        assert_eq!(opt.state().t_prime, 2);
        let pts = opt.state().dataset.points();
        assert!((pts[0].y + 0.9).abs() < 1e-15);
        assert!((pts[1].y + 6.6 / 8.0).abs() < 1e-12);
        assert_eq!(pts[1].theta, q.theta);
    }

    #[test]
    fn retained_low_observation_depresses_mean() {
        let mut opt = Optimizer::initialize(config_1d(), PolicyKind::Etso, -1.0).unwrap();
        let q = opt.next_query().unwrap();
        opt.observe(-1.9).unwrap();
        assert!(opt.reset_pending());
        opt.reset_commit(-1.0).unwrap();
        let post = opt.grid_posterior().unwrap();
        assert!(post.mean[q.index] < -1.0);
    }

    #[test]
    fn safeopt_never_resets() {
        let mut opt =
            Optimizer::initialize(config_1d(), PolicyKind::SafeOptInfinite, -3.0).unwrap();
        for _ in 0..6 {
            opt.next_query().unwrap();
            let events = opt.observe(-9.0).unwrap();
            assert!(events.is_empty());
        }
        assert_eq!(opt.state().dataset.len(), 7);
    }

    #[test]
    fn backup_only_queries_backup() {
        let mut opt = Optimizer::initialize(config_1d(), PolicyKind::BackupOnly, -3.0).unwrap();
        for _ in 0..3 {
            let q = opt.next_query().unwrap();
            assert_eq!(q.theta, vec![0.5]);
            opt.observe(-100.0).unwrap();
        }
    }

    #[test]
    fn exploit_uses_frozen_mask_after_learning() {
        let mut opt = Optimizer::initialize(config_1d(), PolicyKind::SafeOptBudget, -3.0).unwrap();
        let mut phases = Vec::new();
        for _ in 0..6 {
            let q = opt.next_query().unwrap();
            phases.push(q.phase);
            let mean = opt.state().pending_query.as_ref().unwrap().prior_mean;
            opt.observe(mean * 3.0).unwrap();
        }
        // t' = 1, 2, 3 explore; t' = 4 = T_L exploits
        assert_eq!(
            phases,
            vec![
                Phase::Learning,
                Phase::Learning,
                Phase::Learning,
                Phase::Exploiting,
                Phase::Exploiting,
                Phase::Exploiting
            ]
        );
        assert!(opt.state().frozen_safe.is_some());
    }

    #[test]
    fn non_finite_cost_forces_reset() {
        let mut opt = Optimizer::initialize(config_1d(), PolicyKind::Etso, -3.0).unwrap();
        opt.next_query().unwrap();
        let events = opt.observe(f64::NAN).unwrap();
        assert!(events.iter().any(
            |e| matches!(e, Event::CrashObserved { recorded_cost } if *recorded_cost == -10.0)
        ));
        assert!(opt.reset_pending());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut opt = Optimizer::initialize(config_1d(), PolicyKind::Etso, -3.0).unwrap();
        opt.next_query().unwrap();
        opt.observe(-3.0).unwrap();
        let doc = opt.checkpoint();
        assert!(doc.contains("\"t_prime\""));
        let state: EtsoState = serde_json::from_str(&doc).unwrap();
        let mut restored = Optimizer::restore(config_1d(), PolicyKind::Etso, state).unwrap();
        assert_eq!(restored.next_query().unwrap(), opt.next_query().unwrap());
    }
}
