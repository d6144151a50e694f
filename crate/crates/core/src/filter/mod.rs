//! Sequential importance resampling particle filter.
//!
//! State per particle is map-frame position, heading and body-frame
//! forward/lateral velocity. IMU samples drive a stochastic rigid-body motion
//! model at the propagation rate; wheel speed and cost-map frames reweight
//! particles at the measurement rate; systematic resampling runs at the
//! resampling rate. All weights are kept in log space.

mod estimate;
mod likelihood;
mod motion;
mod particles;
mod resample;
mod runner;
mod update;

pub use estimate::{estimate, StateEstimate};
pub(crate) use estimate::estimate_weighted;
pub use likelihood::{log_likelihood_costmap, log_likelihood_wheelspeed, ComparisonTemplate, WheelExponent};
pub use motion::{propagate, propagate_particle, MotionNoise};
pub use particles::{initialize, ParticleSet, ParticleState, Prior};
pub use resample::{resample, resample_indices, Resampler};
pub use runner::{run_filter, FilterEvent, FilterRun, FilterStep, ParticleFilter, ResamplePolicy};
pub use update::{measurement_update, normalize_log_weights, UpdateStats};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map::PatchSpec;

/// Particles per parallel work unit. Random streams are derived per chunk, so
/// results do not depend on how many threads execute them.
pub(crate) const CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("measurement update called without any measurement")]
    NoMeasurement,
    #[error("particle weights degenerated (all zero or non-finite)")]
    DegenerateWeights,
    #[error("operation requires normalized weights")]
    NotNormalized,
}

/// IMU reading in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub timestamp: f64,
    pub a_x: f64,
    pub a_y: f64,
    pub a_z: f64,
    pub alpha_x: f64,
    pub alpha_y: f64,
    pub alpha_z: f64,
}

impl ImuSample {
    pub fn is_finite(&self) -> bool {
        [self.timestamp, self.a_x, self.a_y, self.a_z, self.alpha_x, self.alpha_y, self.alpha_z]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Averaged front-wheel speed (m/s, never negative).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WheelSpeedSample {
    pub timestamp: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub n_particles: usize,
    /// Heading diffusion (rad / √s).
    pub sigma_psi: f64,
    /// Forward velocity diffusion (m/s / √s).
    pub sigma_vx: f64,
    /// Lateral velocity diffusion (m/s / √s).
    pub sigma_vy: f64,
    /// Wheel-speed likelihood spread (m/s).
    pub sigma_wheel: f64,
    pub wheel_exponent: WheelExponent,
    /// Rate of the exponential cost-map likelihood.
    pub lambda: f64,
    pub propagate_rate: f64,
    pub measurement_rate: f64,
    pub resample_rate: f64,
    /// Window of the sensor frame compared against the map.
    pub comparison_patch: PatchSpec,
    pub resample_policy: ResamplePolicy,
    pub resampler: Resampler,
    /// Adaptive policy resamples when ESS drops below this fraction of N.
    pub ess_fraction: f64,
    /// Include the `ψ̇ × v` transport terms when integrating body-frame
    /// accelerometer readings into body-frame velocity.
    pub rigid_body_transport: bool,
    /// Use wheel speed in measurement updates.
    pub use_wheel: bool,
    /// A frame update whose best particle still disagrees with the frame by
    /// more than this mean absolute error counts as a miss.
    pub divergence_mae: f64,
    /// Consecutive misses after which the filter declares divergence and
    /// reinitializes; zero disables the check.
    pub divergence_updates: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            n_particles: 6400,
            sigma_psi: 0.275,
            sigma_vx: 0.75,
            sigma_vy: 0.75,
            sigma_wheel: 2.5,
            wheel_exponent: WheelExponent::Variance,
            lambda: 8.0,
            propagate_rate: 200.0,
            measurement_rate: 20.0,
            resample_rate: 5.0,
            comparison_patch: PatchSpec::COMPARISON,
            resample_policy: ResamplePolicy::Adaptive,
            resampler: Resampler::Systematic,
            ess_fraction: 0.5,
            rigid_body_transport: true,
            use_wheel: true,
            divergence_mae: 0.3,
            divergence_updates: 20,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        let bad = |m: String| Err(FilterError::InvalidInput(m));
        if self.n_particles == 0 {
            return bad("n_particles must be positive".into());
        }
        for (name, v) in [
            ("propagate_rate", self.propagate_rate),
            ("measurement_rate", self.measurement_rate),
            ("resample_rate", self.resample_rate),
            ("lambda", self.lambda),
            ("sigma_wheel", self.sigma_wheel),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("sigma_psi", self.sigma_psi), ("sigma_vx", self.sigma_vx), ("sigma_vy", self.sigma_vy)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        if !(self.propagate_rate >= self.measurement_rate && self.measurement_rate >= self.resample_rate) {
            return bad("rates must satisfy propagate >= measurement >= resample".into());
        }
        if !self.comparison_patch.is_valid() {
            return bad("invalid comparison patch".into());
        }
        if !(self.divergence_mae.is_finite() && self.divergence_mae >= 0.0) {
            return bad("divergence_mae must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.ess_fraction) {
            return bad("ess_fraction must be in [0, 1]".into());
        }
        Ok(())
    }

    pub fn motion_noise(&self) -> MotionNoise {
        MotionNoise {
            sigma_psi: self.sigma_psi,
            sigma_vx: self.sigma_vx,
            sigma_vy: self.sigma_vy,
            rigid_body_transport: self.rigid_body_transport,
        }
    }
}
