//! Point-mass stand-in for a quadcopter position loop.
//!
//! Per axis the commanded force is
//! `f_cmd = P e + I ∫e - D v` with tunable `(P, I)` and a fixed damping
//! gain `D`; the vertical axis adds the hover thrust `m g`. The applied force
//! follows the clipped command through a first-order inner loop whose
//! bandwidth is scaled by the gain factor `C`:
//! `ḟ = C ω_in (clip(f_cmd) - f)`. Lowering `C` slows the inner loop, which
//! lowers the largest stabilizing position gain to roughly `D C ω_in`.

use serde::{Deserialize, Serialize};

use super::reference::ReferenceTrajectory;
use crate::error::{Error, Result};

/// Position-controller gains `[P_xy, P_z, I_xy, I_z]`.
pub type Gains = [f64; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    /// kg
    pub mass: f64,
    /// Fixed velocity damping gain for the horizontal axes.
    pub damping_xy: f64,
    /// Fixed velocity damping gain for the vertical axis.
    pub damping_z: f64,
    /// Nominal inner-loop bandwidth `ω_in`, rad/s.
    pub inner_bandwidth: f64,
    /// m/s², acting along `-z`.
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    /// Per-axis force limit, N.
    pub actuation_limit: f64,
    /// Integration step, s.
    pub time_step: f64,
    /// Position-error norm that counts as a crash, m.
    pub crash_bound: f64,
    /// Initial position relative to the first reference point, m.
    #[serde(default)]
    pub initial_offset: [f64; 3],
    /// Seconds between recorded position samples.
    pub sample_period: f64,
}

fn default_gravity() -> f64 {
    9.81
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("damping_xy", self.damping_xy),
            ("damping_z", self.damping_z),
            ("inner_bandwidth", self.inner_bandwidth),
            ("actuation_limit", self.actuation_limit),
            ("time_step", self.time_step),
            ("crash_bound", self.crash_bound),
            ("sample_period", self.sample_period),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!(
                    "plant {name} = {v} must be positive"
                )));
            }
        }
        if !(self.gravity.is_finite() && self.gravity >= 0.0) {
            return Err(Error::config("gravity must be nonnegative"));
        }
        if self.actuation_limit <= self.mass * self.gravity {
            return Err(Error::config(
                "actuation limit cannot hold the vehicle against gravity",
            ));
        }
        if self.sample_period < self.time_step {
            return Err(Error::config("sample period is shorter than the time step"));
        }
        Ok(())
    }
}

/// Plant constants plus the mode-dependent inner-loop gain factor `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub params: PlantParams,
    pub gain_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    /// Positions at the measurement steps.
    pub samples: Vec<[f64; 3]>,
    pub crashed: bool,
}

/// Integrates one episode with semi-implicit Euler steps.
pub fn simulate_episode(
    plant: &Plant,
    gains: &Gains,
    reference: &ReferenceTrajectory,
) -> Result<Episode> {
    if gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::domain(format!(
            "controller gains {gains:?} must be nonnegative"
        )));
    }
    if !(plant.gain_factor.is_finite() && plant.gain_factor > 0.0) {
        return Err(Error::domain("gain factor must be positive"));
    }
    let p = &plant.params;
    let dt = p.time_step;
    let steps = (reference.duration / dt).round() as usize;
    let sample_every = ((p.sample_period / dt).round() as usize).max(1);

    let (start, _) = reference.sample(0.0);
    let mut pos = [0.0; 3];
    for i in 0..3 {
        pos[i] = start[i] + p.initial_offset[i];
    }
    let alpha = (plant.gain_factor * p.inner_bandwidth * dt).min(1.0);
    let hover = [0.0, 0.0, p.mass * p.gravity];
    let mut force = hover;
    let mut vel = [0.0; 3];
    let mut integral = [0.0; 3];
    let mut samples = Vec::with_capacity(steps / sample_every + 1);
    samples.push(pos);

    for k in 1..=steps {
        let t = (k - 1) as f64 * dt;
        let (r, _) = reference.sample(t);
        let mut err2 = 0.0;
        for i in 0..3 {
            let (kp, ki, kd) = if i < 2 {
                (gains[0], gains[2], p.damping_xy)
            } else {
                (gains[1], gains[3], p.damping_z)
            };
            let e = r[i] - pos[i];
            integral[i] += e * dt;
            let cmd = (kp * e + ki * integral[i] - kd * vel[i] + hover[i])
                .clamp(-p.actuation_limit, p.actuation_limit);
            force[i] += alpha * (cmd - force[i]);
            vel[i] += (force[i] - hover[i]) / p.mass * dt;
            pos[i] += vel[i] * dt;
        }
        let (r_next, _) = reference.sample(k as f64 * dt);
        for i in 0..3 {
            err2 += (r_next[i] - pos[i]).powi(2);
        }
        if !err2.is_finite() || err2.sqrt() > p.crash_bound {
            samples.push(pos);
            return Ok(Episode {
                samples,
                crashed: true,
            });
        }
        if k % sample_every == 0 {
            samples.push(pos);
        }
    }
    Ok(Episode {
        samples,
        crashed: false,
    })
}

/// `-Σ_q (min_k |x_k - w_q|)^exponent` over the waypoints `w_q`.
pub fn episode_cost(samples: &[[f64; 3]], waypoints: &[[f64; 3]], exponent: f64) -> Result<f64> {
    if samples.is_empty() || waypoints.is_empty() {
        return Err(Error::domain("cost needs samples and waypoints"));
    }
    let cost = waypoints
        .iter()
        .map(|w| {
            let d2 = samples
                .iter()
                .map(|s| (s[0] - w[0]).powi(2) + (s[1] - w[1]).powi(2) + (s[2] - w[2]).powi(2))
                .fold(f64::INFINITY, f64::min);
            d2.sqrt().powf(exponent)
        })
        .sum::<f64>();
    Ok(-cost)
}
