use serde::{Deserialize, Serialize};

use super::reference::ShapeSpec;
use crate::error::{Error, Result};

/// Hidden configuration of the closed loop during a stretch of rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    /// First round (1-based) in which this mode is active.
    pub start: u32,
    pub reference: ShapeSpec,
    /// Inner-loop gain factor `C`.
    #[serde(default = "unit_gain")]
    pub gain_factor: f64,
}

fn unit_gain() -> f64 {
    1.0
}

/// Piecewise-constant mode sequence over rounds `1..=horizon`. Round 0 is
/// the initial backup evaluation and uses the first mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSchedule {
    pub modes: Vec<ModeSpec>,
    /// Minimum number of rounds between two changes.
    pub dwell: u32,
    pub horizon: u32,
}

impl ModeSchedule {
    pub fn new(modes: Vec<ModeSpec>, dwell: u32, horizon: u32) -> Result<Self> {
        let schedule = ModeSchedule {
            modes,
            dwell,
            horizon,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .modes
            .first()
            .ok_or_else(|| Error::config("schedule needs at least one mode"))?;
        if first.start != 1 {
            return Err(Error::config(format!(
                "first mode starts at round {}, expected 1",
                first.start
            )));
        }
        for pair in self.modes.windows(2) {
            let gap = pair[1].start.saturating_sub(pair[0].start);
            if pair[1].start <= pair[0].start || gap < self.dwell {
                return Err(Error::config(format!(
                    "mode change at round {} is {gap} rounds after the previous one (dwell {})",
                    pair[1].start, self.dwell
                )));
            }
        }
        for m in &self.modes {
            if !(m.gain_factor.is_finite() && m.gain_factor > 0.0) {
                return Err(Error::config("gain factor must be positive"));
            }
        }
        Ok(())
    }

    /// Index of the mode active at `round`.
    pub fn mode_at(&self, round: u32) -> Result<usize> {
        if round > self.horizon {
            return Err(Error::domain(format!(
                "round {round} exceeds the schedule horizon {}",
                self.horizon
            )));
        }
        Ok(self
            .modes
            .iter()
            .rposition(|m| m.start <= round.max(1))
            .unwrap_or(0))
    }

    /// Rounds at which the mode changes.
    pub fn change_rounds(&self) -> Vec<u32> {
        self.modes.iter().skip(1).map(|m| m.start).collect()
    }
}
