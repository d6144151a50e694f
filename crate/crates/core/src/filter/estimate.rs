use serde::{Deserialize, Serialize};

use super::ParticleSet;
use crate::geometry::Pose2D;

/// Weighted mean state with dispersion diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateEstimate {
    pub timestamp: f64,
    pub p_x: f64,
    pub p_y: f64,
    pub psi: f64,
    pub v_x: f64,
    pub v_y: f64,
    /// Square root of the weighted positional variance (both axes summed).
    pub position_std: f64,
    pub ess: f64,
}

impl StateEstimate {
    pub fn pose(&self) -> Pose2D {
        Pose2D { p_x: self.p_x, p_y: self.p_y, psi: self.psi }
    }
}

/// Weighted mean of the population, with a circular mean for heading.
pub fn estimate(set: &ParticleSet, timestamp: f64) -> StateEstimate {
    estimate_weighted(set, &set.weights(), timestamp)
}

pub(crate) fn estimate_weighted(set: &ParticleSet, w: &[f64], timestamp: f64) -> StateEstimate {
    let (mut x, mut y, mut s, mut c, mut vx, mut vy, mut w2) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (p, &wi) in set.particles.iter().zip(w) {
        x += wi * p.p_x;
        y += wi * p.p_y;
        let (sn, cs) = p.psi.sin_cos();
        s += wi * sn;
        c += wi * cs;
        vx += wi * p.v_x;
        vy += wi * p.v_y;
        w2 += wi * wi;
    }
    let var: f64 = set
        .particles
        .iter()
        .zip(w)
        .map(|(p, &wi)| wi * ((p.p_x - x).powi(2) + (p.p_y - y).powi(2)))
        .sum();
    StateEstimate {
        timestamp,
        p_x: x,
        p_y: y,
        psi: crate::geometry::wrap_angle(s.atan2(c)),
        v_x: vx,
        v_y: vy,
        position_std: var.max(0.0).sqrt(),
        ess: 1.0 / w2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::ParticleState;
    use std::f64::consts::PI;

    #[test]
    fn identical_particles() {
        let p = ParticleState { p_x: 2.0, p_y: -1.0, psi: 0.3, v_x: 4.0, v_y: 0.1 };
        let e = estimate(&ParticleSet::uniform(vec![p; 64]), 1.5);
        assert!((e.p_x - 2.0).abs() < 1e-12 && (e.p_y + 1.0).abs() < 1e-12);
        assert!((e.psi - 0.3).abs() < 1e-12 && (e.v_x - 4.0).abs() < 1e-12);
        assert!(e.position_std < 1e-6);
        assert!((e.ess - 64.0).abs() < 1e-9);
        assert_eq!(e.timestamp, 1.5);
    }

    #[test]
    fn circular_heading_mean() {
        let a = ParticleState { psi: 179f64.to_radians(), ..Default::default() };
        let b = ParticleState { psi: -179f64.to_radians(), ..Default::default() };
        let e = estimate(&ParticleSet::uniform(vec![a, b]), 0.0);
        assert!((e.psi.abs() - PI).abs() < 1e-9);
    }

    #[test]
    fn weighted_position() {
        let a = ParticleState::default();
        let b = ParticleState { p_x: 10.0, ..Default::default() };
        let mut set = ParticleSet::uniform(vec![a, b]);
        set.log_weights = vec![0.9f64.ln(), 0.1f64.ln()];
        let e = estimate(&set, 0.0);
        assert!((e.p_x - 1.0).abs() < 1e-12);
        assert!((e.ess - 1.0 / 0.82).abs() < 1e-9);
    }
}
