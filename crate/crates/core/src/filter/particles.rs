use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::FilterError;
use crate::geometry::{wrap_angle, Pose2D};
use crate::map::SchematicMap;

/// One hypothesis: map-frame position and heading, body-frame velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParticleState {
    pub p_x: f64,
    pub p_y: f64,
    pub psi: f64,
    pub v_x: f64,
    pub v_y: f64,
}

impl ParticleState {
    pub fn pose(&self) -> Pose2D {
        Pose2D { p_x: self.p_x, p_y: self.p_y, psi: self.psi }
    }

    pub fn is_finite(&self) -> bool {
        self.p_x.is_finite() && self.p_y.is_finite() && self.psi.is_finite() && self.v_x.is_finite() && self.v_y.is_finite()
    }
}

/// Weighted particle population.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<ParticleState>,
    pub log_weights: Vec<f64>,
    /// True when `exp(log_weights)` sums to one.
    pub normalized: bool,
}

impl ParticleSet {
    /// Equal-weight set.
    pub fn uniform(particles: Vec<ParticleState>) -> Self {
        let n = particles.len();
        let lw = -(n as f64).ln();
        Self { particles, log_weights: vec![lw; n], normalized: true }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Linear-space weights normalized to sum to one, computed with the
    /// maximum log weight subtracted first.
    pub fn weights(&self) -> Vec<f64> {
        let m = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = self.log_weights.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        w
    }

    pub fn ess(&self) -> f64 {
        1.0 / self.weights().iter().map(|w| w * w).sum::<f64>()
    }
}

/// Initial belief.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Prior {
    /// Independent Gaussians around `mean` with per-component standard
    /// deviations `[p_x, p_y, psi, v_x, v_y]`.
    KnownPose { mean: ParticleState, std: [f64; 5] },
    /// Positions uniform over cells costing less than 0.5, headings uniform,
    /// velocities zero.
    UniformOnTrack,
}

/// Cost below which a cell counts as drivable for uniform initialization.
const ON_TRACK_COST: f64 = 0.5;

pub fn initialize<R: Rng + ?Sized>(
    map: &SchematicMap,
    prior: &Prior,
    n: usize,
    rng: &mut R,
) -> Result<ParticleSet, FilterError> {
    if n == 0 {
        return Err(FilterError::InvalidInput("particle count must be positive".into()));
    }
    let particles = match prior {
        Prior::KnownPose { mean, std } => {
            if !mean.is_finite() || std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return Err(FilterError::InvalidInput("known-pose prior must be finite with std >= 0".into()));
            }
            (0..n)
                .map(|_| {
                    let mut z = [0.0; 5];
                    for (zi, s) in z.iter_mut().zip(std) {
                        *zi = if *s > 0.0 { s * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
                    }
                    ParticleState {
                        p_x: mean.p_x + z[0],
                        p_y: mean.p_y + z[1],
                        psi: wrap_angle(mean.psi + z[2]),
                        v_x: mean.v_x + z[3],
                        v_y: mean.v_y + z[4],
                    }
                })
                .collect()
        }
        Prior::UniformOnTrack => {
            if !map.cost().iter().any(|c| (*c as f64) < ON_TRACK_COST) {
                return Err(FilterError::InvalidMap("no cell with cost below 0.5".into()));
            }
            let (x0, y0, x1, y1) = map.extent();
            (0..n)
                .map(|_| loop {
                    let x = rng.random_range(x0..x1);
                    let y = rng.random_range(y0..y1);
                    if map.query_cost(x, y) < ON_TRACK_COST {
                        let psi = wrap_angle(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
                        break ParticleState { p_x: x, p_y: y, psi, v_x: 0.0, v_y: 0.0 };
                    }
                })
                .collect()
        }
    };
    Ok(ParticleSet::uniform(particles))
}
