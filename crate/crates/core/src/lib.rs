//! Event-triggered safe Bayesian optimization (ETSO) for controller tuning
//! under time-varying objectives, with SafeOpt baselines, desk-scale
//! closed-loop environments and a seeded benchmark runner.

pub mod bench;
pub mod env;
pub mod error;
pub mod exec;
pub mod gp;
pub mod grid;
pub mod optimizer;
pub mod safe_set;
pub mod scenario;
pub mod trigger;

pub use error::{Error, Result};
pub use exec::Execution;
pub use gp::{Dataset, GpModel, KernelParams, Posterior};
pub use grid::{GridDomain, GridSpec};
pub use optimizer::{BetaSchedule, EtsoConfig, EtsoState, Event, Optimizer, Phase, PolicyKind};
pub use safe_set::{Candidates, SetMasks};
pub use trigger::{ThresholdScaling, TriggerConfig};
