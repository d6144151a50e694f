//! Model predictive path integral control.
//!
//! Each plan samples `K` perturbations of the previous control sequence,
//! rolls them out through a dynamics model, scores them with a running cost
//! and returns the exponentially weighted average.

mod controller;
mod cost;
mod rollout;

pub use controller::{compute_control, importance_weights, weighted_average, Mppi, Plan};
pub use cost::{mapless_cost_lookup, running_cost, CostSource, CostWeights, SpeedMode};
pub use rollout::{rollout, Rollout};

use serde::{Deserialize, Serialize};

use crate::sim::VehicleState;

/// Normalized steering and throttle, each in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub steering: f64,
    pub throttle: f64,
}

impl Control {
    pub fn clamped(self) -> Self {
        Self { steering: self.steering.clamp(-1.0, 1.0), throttle: self.throttle.clamp(-1.0, 1.0) }
    }
}

/// Receding-horizon control plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSequence {
    pub dt: f64,
    pub controls: Vec<Control>,
}

impl ControlSequence {
    pub fn zeros(horizon: usize, dt: f64) -> Self {
        Self { dt, controls: vec![Control::default(); horizon] }
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    /// Drops the first `steps` entries and repeats the last one at the end.
    pub fn shift(&mut self, steps: usize) {
        let n = self.controls.len();
        if n == 0 || steps == 0 {
            return;
        }
        let last = self.controls[n - 1];
        let k = steps.min(n);
        self.controls.drain(..k);
        self.controls.resize(n, last);
    }
}

/// Discrete-time vehicle model used for rollouts.
pub trait DynamicsModel: Sync {
    fn propagate(&self, state: &VehicleState, control: &Control, dt: f64) -> VehicleState;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MppiConfig {
    /// Sampled sequences per plan.
    pub samples: usize,
    /// Horizon steps.
    pub horizon: usize,
    pub dt: f64,
    pub steering_noise: f64,
    pub throttle_noise: f64,
    pub temperature: f64,
}

impl Default for MppiConfig {
    fn default() -> Self {
        Self { samples: 1200, horizon: 60, dt: 0.025, steering_noise: 0.3, throttle_noise: 0.3, temperature: 1.0 }
    }
}

impl MppiConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.samples == 0 || self.horizon == 0 {
            return Err("samples and horizon must be positive".into());
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.steering_noise >= 0.0 && self.throttle_noise >= 0.0) {
            return Err("noise standard deviations must be >= 0".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_repeats_last() {
        let mut s = ControlSequence {
            dt: 0.1,
            controls: (0..4).map(|k| Control { steering: k as f64, throttle: 0.0 }).collect(),
        };
        s.shift(2);
        let st: Vec<f64> = s.controls.iter().map(|c| c.steering).collect();
        assert_eq!(st, vec![2.0, 3.0, 3.0, 3.0]);
        s.shift(10);
        assert!(s.controls.iter().all(|c| c.steering == 3.0));
    }
}
