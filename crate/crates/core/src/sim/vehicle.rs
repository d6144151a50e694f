use serde::{Deserialize, Serialize};

use crate::geometry::wrap_angle;
use crate::mppi::{Control, DynamicsModel};

/// Rigid-body state shared by the plant and the planner's rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    /// Body-frame forward velocity (m/s).
    pub v_x: f64,
    /// Body-frame lateral velocity (m/s, positive left).
    pub v_y: f64,
    pub yaw_rate: f64,
}

impl VehicleState {
    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.psi, self.v_x, self.v_y, self.yaw_rate].iter().all(|v| v.is_finite())
    }

    pub fn speed(&self) -> f64 {
        self.v_x.hypot(self.v_y)
    }
}

/// Plant state: the rigid body plus front wheel speed and time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimState {
    pub t: f64,
    pub body: VehicleState,
    /// Averaged front wheel speed (m/s).
    pub wheel_speed_front: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    pub mass: f64,
    pub yaw_inertia: f64,
    /// Distance from the center of mass to the front axle (m).
    pub l_f: f64,
    /// Distance from the center of mass to the rear axle (m).
    pub l_r: f64,
    pub cornering_front: f64,
    pub cornering_rear: f64,
    pub friction: f64,
    /// Longitudinal acceleration per unit throttle (m/s²).
    pub drive_gain: f64,
    pub max_steer: f64,
    /// Linear drag (1/s).
    pub drag_linear: f64,
    /// Quadratic drag (1/m).
    pub drag_quadratic: f64,
    /// Front wheel speed lag time constant (s).
    pub wheel_lag: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 22.0,
            yaw_inertia: 1.1,
            l_f: 0.30,
            l_r: 0.27,
            cornering_front: 1200.0,
            cornering_rear: 1400.0,
            friction: 0.9,
            drive_gain: 8.0,
            max_steer: 0.35,
            drag_linear: 0.2,
            drag_quadratic: 0.04,
            wheel_lag: 0.02,
        }
    }
}

const G: f64 = 9.81;
/// Below this speed the lateral dynamics follow the kinematic model.
const V_KIN: f64 = 0.5;
/// Width of the speed band over which the kinematic and dynamic models blend.
const V_BLEND: f64 = 1.0;
/// Largest `dt · stiffness` per substep.
const STEP_GAIN: f64 = 1.0;

impl VehicleParams {
    pub fn wheelbase(&self) -> f64 {
        self.l_f + self.l_r
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("mass", self.mass),
            ("yaw_inertia", self.yaw_inertia),
            ("l_f", self.l_f),
            ("l_r", self.l_r),
            ("cornering_front", self.cornering_front),
            ("cornering_rear", self.cornering_rear),
            ("drive_gain", self.drive_gain),
            ("max_steer", self.max_steer),
            ("wheel_lag", self.wheel_lag),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.friction > 0.0 && self.friction <= 2.0) {
            return Err(format!("friction must be in (0, 2], got {}", self.friction));
        }
        if !(self.drag_linear >= 0.0 && self.drag_quadratic >= 0.0) {
            return Err("drag coefficients must be >= 0".into());
        }
        if self.max_steer >= std::f64::consts::FRAC_PI_2 {
            return Err("max_steer must be below 90 degrees".into());
        }
        Ok(())
    }

    /// Upper bound on the stiffest lateral/yaw eigenvalue at speed `v_x`.
    /// Below the blend band the kinematic model takes over, so the bound
    /// stops growing there.
    fn stiffness(&self, v_x: f64) -> f64 {
        let c = self.cornering_front + self.cornering_rear;
        let k = self.l_f * self.l_f * self.cornering_front + self.l_r * self.l_r * self.cornering_rear;
        (c / self.mass + k / self.yaw_inertia) / v_x.abs().max(V_KIN + V_BLEND)
    }

    fn substeps(&self, v_x: f64, dt: f64) -> usize {
        ((dt * self.stiffness(v_x) / STEP_GAIN).ceil() as usize).max(1)
    }
}

/// One dynamic bicycle substep of the rigid body.
fn body_step(s: &VehicleState, u: &Control, p: &VehicleParams, dt: f64) -> VehicleState {
    let steering = u.steering.clamp(-1.0, 1.0);
    let throttle = u.throttle.clamp(-1.0, 1.0);
    let delta = steering * p.max_steer;
    let (sd, cd) = delta.sin_cos();
    let l = p.wheelbase();
    let vx = s.v_x;

    // Longitudinal: drive (or brake) minus drag. Braking cannot reverse.
    let mut ax = p.drive_gain * throttle - p.drag_linear * vx - p.drag_quadratic * vx * vx.abs();
    if vx <= 0.0 && ax < 0.0 {
        ax = 0.0;
    }

    // Lateral tire forces, linear in slip angle, capped by friction.
    let fz_f = p.mass * G * p.l_r / l;
    let fz_r = p.mass * G * p.l_f / l;
    let alpha_f = delta - (s.v_y + p.l_f * s.yaw_rate).atan2(vx.max(0.0) + 1e-3);
    let alpha_r = -(s.v_y - p.l_r * s.yaw_rate).atan2(vx.max(0.0) + 1e-3);
    let cap_f = p.friction * fz_f;
    let cap_r = p.friction * fz_r;
    let fy_f = (p.cornering_front * alpha_f).clamp(-cap_f, cap_f);
    let fy_r = (p.cornering_rear * alpha_r).clamp(-cap_r, cap_r);

    let dvx = (ax - fy_f * sd / p.mass) * dt;
    let dvy = ((fy_f * cd + fy_r) / p.mass) * dt;
    let dr = ((p.l_f * fy_f * cd - p.l_r * fy_r) / p.yaw_inertia) * dt;

    let mut nvx = (vx + dvx).max(0.0);
    let mut nvy = s.v_y + dvy;
    let mut nr = s.yaw_rate + dr;

    // Kinematic model at low speed, blended in smoothly.
    let b = ((nvx - V_KIN) / V_BLEND).clamp(0.0, 1.0);
    if b < 1.0 {
        let r_k = nvx * delta.tan() / l;
        let vy_k = r_k * p.l_r;
        nr = b * nr + (1.0 - b) * r_k;
        nvy = b * nvy + (1.0 - b) * vy_k;
    }

    // The body frame turns by r dt; express the velocity in the new frame by
    // an exact rotation so the turn itself adds no energy.
    let dpsi = nr * dt;
    let (sr, cr) = dpsi.sin_cos();
    let rvx = nvx * cr + nvy * sr;
    let rvy = -nvx * sr + nvy * cr;
    nvx = rvx.max(0.0);
    nvy = rvy;

    // Semi-implicit position update with the new velocities and heading.
    let psi = wrap_angle(s.psi + dpsi);
    let (sp, cp) = psi.sin_cos();
    VehicleState {
        x: s.x + (nvx * cp - nvy * sp) * dt,
        y: s.y + (nvx * sp + nvy * cp) * dt,
        psi,
        v_x: nvx,
        v_y: nvy,
        yaw_rate: nr,
    }
}

/// Advances the plant by `dt` (at most 10 ms) under `control`.
pub fn step(state: &SimState, control: &Control, params: &VehicleParams, dt: f64) -> SimState {
    debug_assert!(dt > 0.0 && dt <= 0.01 + 1e-12);
    let n = params.substeps(state.body.v_x, dt);
    let h = dt / n as f64;
    let mut body = state.body;
    for _ in 0..n {
        body = body_step(&body, control, params, h);
    }
    let k = (dt / params.wheel_lag).min(1.0);
    let wheel = state.wheel_speed_front + (body.v_x.abs() - state.wheel_speed_front) * k;
    SimState { t: state.t + dt, body, wheel_speed_front: wheel }
}

/// The plant's rigid-body dynamics exposed to the planner.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BicycleModel {
    pub params: VehicleParams,
}

impl DynamicsModel for BicycleModel {
    #[inline]
    fn propagate(&self, state: &VehicleState, control: &Control, dt: f64) -> VehicleState {
        let n = self.params.substeps(state.v_x, dt);
        let h = dt / n as f64;
        let mut s = *state;
        for _ in 0..n {
            s = body_step(&s, control, &self.params, h);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(state: SimState, u: Control, secs: f64) -> SimState {
        let p = VehicleParams::default();
        let mut s = state;
        for _ in 0..(secs * 1000.0).round() as usize {
            s = step(&s, &u, &p, 0.001);
        }
        s
    }

    #[test]
    fn rest_is_equilibrium() {
        let s = run(SimState::default(), Control::default(), 1.0);
        assert_eq!(s.body, VehicleState::default());
        assert!((s.t - 1.0).abs() < 1e-9);
        assert_eq!(s.wheel_speed_front, 0.0);
    }

    #[test]
    fn throttle_step_saturates_below_drag_limit() {
        let p = VehicleParams::default();
        // Equilibrium of g u = c1 v + c2 v^2.
        let u = 0.5;
        let f = p.drive_gain * u;
        let v_eq = (-p.drag_linear + (p.drag_linear.powi(2) + 4.0 * p.drag_quadratic * f).sqrt())
            / (2.0 * p.drag_quadratic);
        let mut s = SimState::default();
        let mut prev = 0.0;
        for _ in 0..60_000 {
            s = step(&s, &Control { steering: 0.0, throttle: u }, &p, 0.001);
            assert!(s.body.v_x >= prev);
            assert!(s.body.v_x <= v_eq + 1e-9);
            prev = s.body.v_x;
        }
        assert!((s.body.v_x - v_eq).abs() < 1e-3 * v_eq);
    }

    #[test]
    fn low_speed_yaw_rate_matches_kinematic() {
        let p = VehicleParams::default();
        let target = 2.0;
        let steering = 0.2;
        let mut s = SimState { body: VehicleState { v_x: target, ..Default::default() }, ..Default::default() };
        for _ in 0..10_000 {
            let throttle = ((p.drag_linear * s.body.v_x + p.drag_quadratic * s.body.v_x.powi(2)) / p.drive_gain
                + 2.0 * (target - s.body.v_x))
                .clamp(-1.0, 1.0);
            s = step(&s, &Control { steering, throttle }, &p, 0.001);
        }
        let kin = s.body.v_x * (steering * p.max_steer).tan() / p.wheelbase();
        assert!((s.body.yaw_rate - kin).abs() < 0.05 * kin.abs(), "{} vs {kin}", s.body.yaw_rate);
    }

    #[test]
    fn coasting_never_gains_energy() {
        let p = VehicleParams::default();
        let energy = |b: &VehicleState| 0.5 * p.mass * (b.v_x.powi(2) + b.v_y.powi(2)) + 0.5 * p.yaw_inertia * b.yaw_rate.powi(2);
        let mut s = SimState { body: VehicleState { v_x: 8.0, v_y: 0.5, yaw_rate: 1.0, ..Default::default() }, ..Default::default() };
        let mut e = energy(&s.body);
        for k in 0..5000 {
            let steering = (k as f64 * 0.003).sin();
            s = step(&s, &Control { steering, throttle: 0.0 }, &p, 0.001);
            let e1 = energy(&s.body);
            assert!(e1 <= e * (1.0 + 1e-9), "step {k}: {e1} > {e}");
            e = e1;
        }
    }

    #[test]
    fn rollout_model_matches_plant() {
        let model = BicycleModel::default();
        let mut a = VehicleState { v_x: 5.0, ..Default::default() };
        let mut b = SimState { body: a, ..Default::default() };
        let u = Control { steering: 0.3, throttle: 0.4 };
        for _ in 0..40 {
            a = model.propagate(&a, &u, 0.025);
            for _ in 0..25 {
                b = step(&b, &u, &model.params, 0.001);
            }
        }
        assert!((a.x - b.body.x).abs() < 0.1 && (a.y - b.body.y).abs() < 0.1);
    }
}
