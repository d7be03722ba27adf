use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    /// Lemniscate lying in the horizontal plane.
    FigureEightPlanar,
    /// Upright figure eight with a pinched waist, still planar.
    Hourglass,
    /// Planar figure eight with a sinusoidal altitude profile.
    FigureEightAltitude,
}

/// Parametric description of a closed reference path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSpec {
    pub shape: Shape,
    /// Half-width of the figure, meters.
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Cruise altitude, meters.
    #[serde(default = "one")]
    pub altitude: f64,
    /// Peak altitude deviation for [`Shape::FigureEightAltitude`], meters.
    #[serde(default)]
    pub altitude_amplitude: f64,
    /// Waist ratio for [`Shape::Hourglass`] (1 = plain rotated figure eight).
    #[serde(default = "one")]
    pub waist: f64,
    /// Seconds per lap.
    pub period: f64,
    /// Number of waypoints per lap used by the cost.
    pub waypoints: usize,
}

fn one() -> f64 {
    1.0
}

impl ShapeSpec {
    /// Point on the path at phase `s` (radians, one lap = 2π).
    pub fn position(&self, s: f64) -> [f64; 3] {
        let a = self.amplitude;
        match self.shape {
            Shape::FigureEightPlanar => [a * s.sin(), 0.5 * a * (2.0 * s).sin(), self.altitude],
            Shape::Hourglass => [
                0.5 * a * self.waist * (2.0 * s).sin(),
                a * s.sin(),
                self.altitude,
            ],
            Shape::FigureEightAltitude => [
                a * s.sin(),
                0.5 * a * (2.0 * s).sin(),
                self.altitude + self.altitude_amplitude * s.cos(),
            ],
        }
    }

    pub fn trajectory(&self, duration: f64) -> Result<ReferenceTrajectory> {
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::config("reference period must be positive"));
        }
        if self.waypoints < 2 {
            return Err(Error::config("a reference needs at least 2 waypoints"));
        }
        let waypoints = (0..self.waypoints)
            .map(|q| self.position(2.0 * PI * q as f64 / self.waypoints as f64))
            .collect();
        ReferenceTrajectory::new(waypoints, duration, self.period, Some(self.shape))
    }
}

/// Closed waypoint loop traversed at constant segment time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub waypoints: Vec<[f64; 3]>,
    /// Episode duration, seconds.
    pub duration: f64,
    /// Seconds per lap.
    pub period: f64,
    pub shape: Option<Shape>,
}

impl ReferenceTrajectory {
    pub fn new(
        waypoints: Vec<[f64; 3]>,
        duration: f64,
        period: f64,
        shape: Option<Shape>,
    ) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::config("a reference needs at least 2 waypoints"));
        }
        if waypoints.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::config("waypoints must be finite"));
        }
        if !(duration > 0.0 && period > 0.0) {
            return Err(Error::config("duration and period must be positive"));
        }
        Ok(ReferenceTrajectory {
            waypoints,
            duration,
            period,
            shape,
        })
    }

    /// Reference position and velocity at time `t`, linearly interpolated
    /// between consecutive waypoints of the closed loop.
    pub fn sample(&self, t: f64) -> ([f64; 3], [f64; 3]) {
        let n = self.waypoints.len();
        let seg = self.period / n as f64;
        let lap_t = t.rem_euclid(self.period);
        let k = ((lap_t / seg) as usize).min(n - 1);
        let frac = (lap_t - k as f64 * seg) / seg;
        let a = self.waypoints[k];
        let b = self.waypoints[(k + 1) % n];
        let mut pos = [0.0; 3];
        let mut vel = [0.0; 3];
        for i in 0..3 {
            pos[i] = a[i] + frac * (b[i] - a[i]);
            vel[i] = (b[i] - a[i]) / seg;
        }
        (pos, vel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_hits_waypoints() {
        let r = ReferenceTrajectory::new(vec![[0.0, 0.0, 1.0], [1.0, 0.0, 1.0]], 4.0, 2.0, None)
            .unwrap();
        assert_eq!(r.sample(0.0).0, [0.0, 0.0, 1.0]);
        assert_eq!(r.sample(1.0).0, [1.0, 0.0, 1.0]);
        assert_eq!(r.sample(0.5).0, [0.5, 0.0, 1.0]);
        assert_eq!(r.sample(0.5).1, [1.0, 0.0, 0.0]);
        assert_eq!(r.sample(2.0).0, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn shapes_are_closed_and_planar_where_expected() {
        for shape in [
            Shape::FigureEightPlanar,
            Shape::Hourglass,
            Shape::FigureEightAltitude,
        ] {
            let spec = ShapeSpec {
                shape,
                amplitude: 1.0,
                altitude: 1.0,
                altitude_amplitude: 0.3,
                waist: 0.6,
                period: 5.0,
                waypoints: 16,
            };
            let a = spec.position(0.0);
            let b = spec.position(2.0 * PI);
            for i in 0..3 {
                assert!((a[i] - b[i]).abs() < 1e-12);
            }
            let traj = spec.trajectory(10.0).unwrap();
            assert_eq!(traj.waypoints.len(), 16);
            let planar = traj.waypoints.iter().all(|w| (w[2] - 1.0).abs() < 1e-12);
            assert_eq!(planar, shape != Shape::FigureEightAltitude);
        }
    }

    #[test]
    fn rejects_degenerate_references() {
        assert!(ReferenceTrajectory::new(vec![[0.0; 3]], 1.0, 1.0, None).is_err());
        assert!(
            ReferenceTrajectory::new(vec![[0.0; 3], [f64::NAN, 0.0, 0.0]], 1.0, 1.0, None).is_err()
        );
    }
}
