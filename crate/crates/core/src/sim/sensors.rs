use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SimState;
use crate::filter::{ImuSample, WheelSpeedSample};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorNoiseParams {
    pub accel_std: f64,
    pub gyro_std: f64,
    pub accel_bias: f64,
    pub gyro_bias: f64,
    pub wheel_std: f64,
}

impl Default for SensorNoiseParams {
    fn default() -> Self {
        Self { accel_std: 0.05, gyro_std: 0.005, accel_bias: 0.0, gyro_bias: 0.002, wheel_std: 0.1 }
    }
}

impl SensorNoiseParams {
    pub const ZERO: SensorNoiseParams =
        SensorNoiseParams { accel_std: 0.0, gyro_std: 0.0, accel_bias: 0.0, gyro_bias: 0.0, wheel_std: 0.0 };

    pub fn validate(&self) -> Result<(), String> {
        let all = [self.accel_std, self.gyro_std, self.accel_bias, self.gyro_bias, self.wheel_std];
        if all.iter().any(|v| !v.is_finite()) {
            return Err("sensor noise parameters must be finite".into());
        }
        if self.accel_std < 0.0 || self.gyro_std < 0.0 || self.wheel_std < 0.0 {
            return Err("sensor noise standard deviations must be >= 0".into());
        }
        Ok(())
    }
}

#[inline]
fn gauss<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    // Always draw, so the stream does not depend on which stds are zero.
    let z: f64 = rng.sample(StandardNormal);
    std * z
}

/// Body-frame IMU sample for the interval from `prev` to `state`.
///
/// Accelerations are the finite-difference body-velocity derivatives plus the
/// rotating-frame terms; rates and transport terms use the interval average.
pub fn emit_imu<R: Rng + ?Sized>(state: &SimState, prev: &SimState, noise: &SensorNoiseParams, rng: &mut R) -> ImuSample {
    let dt = state.t - prev.t;
    let (b0, b1) = (&prev.body, &state.body);
    let r = 0.5 * (b0.yaw_rate + b1.yaw_rate);
    let vx = 0.5 * (b0.v_x + b1.v_x);
    let vy = 0.5 * (b0.v_y + b1.v_y);
    let (ax, ay) = if dt > 0.0 {
        ((b1.v_x - b0.v_x) / dt - r * vy, (b1.v_y - b0.v_y) / dt + r * vx)
    } else {
        (0.0, 0.0)
    };
    ImuSample {
        timestamp: state.t,
        a_x: ax + noise.accel_bias + gauss(rng, noise.accel_std),
        a_y: ay + noise.accel_bias + gauss(rng, noise.accel_std),
        a_z: GRAVITY + gauss(rng, noise.accel_std),
        alpha_x: gauss(rng, noise.gyro_std),
        alpha_y: gauss(rng, noise.gyro_std),
        alpha_z: r + noise.gyro_bias + gauss(rng, noise.gyro_std),
    }
}

/// Noisy front wheel speed, never negative.
pub fn emit_wheelspeed<R: Rng + ?Sized>(state: &SimState, noise: &SensorNoiseParams, rng: &mut R) -> WheelSpeedSample {
    WheelSpeedSample { timestamp: state.t, speed: (state.wheel_speed_front + gauss(rng, noise.wheel_std)).max(0.0) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{propagate, MotionNoise, ParticleSet, ParticleState};
    use crate::mppi::Control;
    use crate::rng::SimRng;
    use crate::sim::{step, VehicleParams, VehicleState};
    use rand::SeedableRng;

    fn at(t: f64, body: VehicleState) -> SimState {
        SimState { t, body, wheel_speed_front: body.v_x }
    }

    #[test]
    fn straight_motion_reads_zero() {
        let b = VehicleState { v_x: 4.0, ..Default::default() };
        let imu = emit_imu(&at(0.005, b), &at(0.0, b), &SensorNoiseParams::ZERO, &mut SimRng::seed_from_u64(0));
        assert_eq!((imu.a_x, imu.a_y, imu.alpha_z), (0.0, 0.0, 0.0));
        assert_eq!(imu.a_z, GRAVITY);
    }

    #[test]
    fn circular_motion_is_centripetal() {
        let b = VehicleState { v_x: 5.0, yaw_rate: 0.8, ..Default::default() };
        let imu = emit_imu(&at(0.005, b), &at(0.0, b), &SensorNoiseParams::ZERO, &mut SimRng::seed_from_u64(0));
        assert!((imu.a_y - 4.0).abs() < 1e-12);
        assert!(imu.a_x.abs() < 1e-12);
    }

    #[test]
    fn seeded_streams_repeat() {
        let b = VehicleState { v_x: 5.0, yaw_rate: 0.8, ..Default::default() };
        let noise = SensorNoiseParams::default();
        let mut r1 = SimRng::seed_from_u64(5);
        let mut r2 = SimRng::seed_from_u64(5);
        for _ in 0..10 {
            assert_eq!(emit_imu(&at(0.005, b), &at(0.0, b), &noise, &mut r1), emit_imu(&at(0.005, b), &at(0.0, b), &noise, &mut r2));
        }
    }

    #[test]
    fn wheel_speed_cases() {
        let mut rng = SimRng::seed_from_u64(0);
        let still = SimState::default();
        assert_eq!(emit_wheelspeed(&still, &SensorNoiseParams::ZERO, &mut rng).speed, 0.0);
        let moving = at(1.0, VehicleState { v_x: 5.0, ..Default::default() });
        assert_eq!(emit_wheelspeed(&moving, &SensorNoiseParams::ZERO, &mut rng).speed, 5.0);
        let loud = SensorNoiseParams { wheel_std: 100.0, ..SensorNoiseParams::ZERO };
        for _ in 0..200 {
            assert!(emit_wheelspeed(&moving, &loud, &mut rng).speed >= 0.0);
        }
    }

    #[test]
    fn integrated_imu_reproduces_trajectory() {
        // Drive a curvy path on the plant and integrate its noiseless IMU with
        // the filter's motion model from the true initial state.
        let p = VehicleParams::default();
        let start = VehicleState { v_x: 3.0, ..Default::default() };
        let mut s = SimState { body: start, wheel_speed_front: 3.0, ..Default::default() };
        let mut set = ParticleSet::uniform(vec![ParticleState { v_x: 3.0, ..Default::default() }]);
        let mut rng = SimRng::seed_from_u64(0);
        for k in 0..(4 * 200) {
            let prev = s;
            let u = Control { steering: (k as f64 * 0.01).sin() * 0.6, throttle: 0.3 };
            for _ in 0..5 {
                s = step(&s, &u, &p, 0.001);
            }
            let imu = emit_imu(&s, &prev, &SensorNoiseParams::ZERO, &mut rng);
            propagate(&mut set, &imu, 0.005, &MotionNoise::ZERO, &mut rng).unwrap();
        }
        let q = set.particles[0];
        let err = (q.p_x - s.body.x).hypot(q.p_y - s.body.y);
        assert!(err < 0.3, "position error {err} after 4 s");
        assert!((q.v_x - s.body.v_x).abs() < 0.05, "{q:?} {:?}", s.body);
    }
}
