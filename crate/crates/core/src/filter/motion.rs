use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{FilterError, ImuSample, ParticleSet, ParticleState, CHUNK};
use crate::geometry::wrap_angle;
use crate::rng::chunk_rng;

/// Diffusion of the stochastic motion model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionNoise {
    pub sigma_psi: f64,
    pub sigma_vx: f64,
    pub sigma_vy: f64,
    /// Add `ψ̇ v_y` / `−ψ̇ v_x` to the body-frame velocity derivatives, as
    /// required when integrating accelerometer readings in a rotating frame.
    pub rigid_body_transport: bool,
}

impl MotionNoise {
    pub const ZERO: MotionNoise =
        MotionNoise { sigma_psi: 0.0, sigma_vx: 0.0, sigma_vy: 0.0, rigid_body_transport: true };
}

/// One Euler–Maruyama step of a single particle. `dw` holds the three
/// standard-normal draws for the heading, forward and lateral channels.
#[inline]
pub fn propagate_particle(p: &ParticleState, imu: &ImuSample, dt: f64, noise: &MotionNoise, dw: [f64; 3]) -> ParticleState {
    let (s, c) = p.psi.sin_cos();
    let sq = dt.sqrt();
    let r = imu.alpha_z;
    let (ax, ay) = if noise.rigid_body_transport {
        (imu.a_x + r * p.v_y, imu.a_y - r * p.v_x)
    } else {
        (imu.a_x, imu.a_y)
    };
    ParticleState {
        p_x: p.p_x + (p.v_x * c - p.v_y * s) * dt,
        p_y: p.p_y + (p.v_x * s + p.v_y * c) * dt,
        psi: wrap_angle(p.psi + r * dt + noise.sigma_psi * sq * dw[0]),
        v_x: p.v_x + ax * dt + noise.sigma_vx * sq * dw[1],
        v_y: p.v_y + ay * dt + noise.sigma_vy * sq * dw[2],
    }
}

/// Propagates every particle by `dt` using `imu`. Weights are untouched.
///
/// One `u64` is drawn from `rng`; each chunk of particles then gets its own
/// generator derived from it, so the result does not depend on scheduling.
pub fn propagate<R: Rng + ?Sized>(
    set: &mut ParticleSet,
    imu: &ImuSample,
    dt: f64,
    noise: &MotionNoise,
    rng: &mut R,
) -> Result<(), FilterError> {
    if !imu.is_finite() {
        return Err(FilterError::InvalidInput("non-finite IMU sample".into()));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(FilterError::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let base = rng.next_u64();
    let diffuse = noise.sigma_psi > 0.0 || noise.sigma_vx > 0.0 || noise.sigma_vy > 0.0;
    set.particles.par_chunks_mut(CHUNK).enumerate().for_each(|(k, chunk)| {
        let mut crng = chunk_rng(base, 0, k as u64);
        for p in chunk.iter_mut() {
            let dw = if diffuse {
                [crng.sample(StandardNormal), crng.sample(StandardNormal), crng.sample(StandardNormal)]
            } else {
                [0.0; 3]
            };
            *p = propagate_particle(p, imu, dt, noise, dw);
        }
    });
    Ok(())
}
