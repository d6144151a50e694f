use serde::{Deserialize, Serialize};

use crate::geometry::{bilinear, Pose2D};
use crate::map::SchematicMap;
use crate::sensor::CostmapFrame;
use crate::sim::VehicleState;

/// Speed objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpeedMode {
    /// `(v_x − v)²`.
    Target { v: f64 },
    /// `|v_x − v|`; with a high `v` this rewards going as fast as possible.
    Unbounded { v: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    pub track: f64,
    pub speed: f64,
    pub indicator: f64,
    pub slip: f64,
    /// Track cost above which the indicator fires.
    pub track_threshold: f64,
    /// Yaw rate magnitude (rad/s) above which the indicator fires.
    pub yaw_rate_threshold: f64,
    /// Per-step decay of the indicator term.
    pub decay: f64,
    pub speed_mode: SpeedMode,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            track: 100.0,
            speed: 10.0,
            indicator: 1000.0,
            slip: 10.0,
            track_threshold: 0.9,
            yaw_rate_threshold: 5.0,
            decay: 0.9,
            speed_mode: SpeedMode::Target { v: 6.0 },
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("track", self.track), ("speed", self.speed), ("indicator", self.indicator), ("slip", self.slip)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("weight {name} must be >= 0, got {v}"));
            }
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(format!("decay must be in (0, 1), got {}", self.decay));
        }
        let v = match self.speed_mode {
            SpeedMode::Target { v } | SpeedMode::Unbounded { v } => v,
        };
        if !v.is_finite() {
            return Err("desired speed must be finite".into());
        }
        Ok(())
    }
}

/// Where rollouts read positional cost from.
#[derive(Debug, Clone, Copy)]
pub enum CostSource<'a> {
    Map(&'a SchematicMap),
    /// An egocentric frame captured at `pose`.
    Frame { frame: &'a CostmapFrame, pose: Pose2D },
}

impl CostSource<'_> {
    #[inline]
    pub fn cost(&self, x: f64, y: f64) -> f64 {
        match self {
            CostSource::Map(m) => m.query_cost(x, y),
            CostSource::Frame { frame, pose } => mapless_cost_lookup(frame, pose, x, y),
        }
    }
}

/// Cost of world point `(x, y)` read from `frame`, which was captured at
/// `pose`. Points outside the frame cost one.
#[inline]
pub fn mapless_cost_lookup(frame: &CostmapFrame, pose: &Pose2D, x: f64, y: f64) -> f64 {
    let (f, l) = pose.world_to_ego(x, y);
    let (u, v) = frame.spec.ego_to_pixel(f, l);
    bilinear(&frame.values, frame.width(), frame.height(), u, v).unwrap_or(1.0)
}

/// Running cost of `state` at horizon step `t`.
#[inline]
pub fn running_cost(state: &VehicleState, t: usize, source: &CostSource, w: &CostWeights) -> f64 {
    let c_m = source.cost(state.x, state.y);
    running_cost_with(state, t, c_m, w)
}

#[inline]
pub(crate) fn running_cost_with(state: &VehicleState, t: usize, c_m: f64, w: &CostWeights) -> f64 {
    let h = match w.speed_mode {
        SpeedMode::Target { v } => (state.v_x - v).powi(2),
        SpeedMode::Unbounded { v } => (state.v_x - v).abs(),
    };
    let fired = c_m > w.track_threshold || state.yaw_rate.abs() > w.yaw_rate_threshold;
    let indicator = if fired { w.decay.powi(t as i32) } else { 0.0 };
    let slip = state.v_y / state.v_x.abs().max(0.1);
    w.track * c_m + w.speed * h + w.indicator * indicator + w.slip * slip * slip
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::PatchSpec;
    use std::f64::consts::TAU;

    fn weights() -> CostWeights {
        CostWeights { track: 1.0, speed: 1.0, indicator: 1.0, slip: 1.0, ..Default::default() }
    }

    fn flat(value: f32) -> SchematicMap {
        SchematicMap::from_parts(100, 100, 10.0, [-5.0, -5.0], 1.0, vec![value; 10_000]).unwrap()
    }

    #[test]
    fn zero_cost_on_target() {
        let map = flat(0.0);
        let s = VehicleState { v_x: 6.0, ..Default::default() };
        assert_eq!(running_cost(&s, 0, &CostSource::Map(&map), &weights()), 0.0);
    }

    #[test]
    fn slip_term() {
        let map = flat(0.0);
        let w = CostWeights { track: 0.0, speed: 0.0, indicator: 0.0, slip: 3.0, ..Default::default() };
        let s = VehicleState { v_x: 2.0, v_y: 1.0, ..Default::default() };
        assert!((running_cost(&s, 0, &CostSource::Map(&map), &w) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn indicator_decays() {
        let map = flat(0.95);
        let w = CostWeights { track: 0.0, speed: 0.0, indicator: 1.0, slip: 0.0, ..Default::default() };
        let s = VehicleState { v_x: 6.0, ..Default::default() };
        let c0 = running_cost(&s, 0, &CostSource::Map(&map), &w);
        let c10 = running_cost(&s, 10, &CostSource::Map(&map), &w);
        assert_eq!(c0, 1.0);
        assert!((c10 / c0 - 0.348_678_440_1).abs() < 1e-9);
        let spin = VehicleState { yaw_rate: 6.0, ..s };
        assert_eq!(running_cost(&spin, 0, &CostSource::Map(&flat(0.0)), &w), 1.0);
    }

    #[test]
    fn unbounded_speed_is_absolute() {
        let map = flat(0.0);
        let w = CostWeights { track: 0.0, speed: 1.0, indicator: 0.0, slip: 0.0, speed_mode: SpeedMode::Unbounded { v: 25.0 }, ..Default::default() };
        let s = VehicleState { v_x: 10.0, ..Default::default() };
        assert_eq!(running_cost(&s, 0, &CostSource::Map(&map), &w), 15.0);
    }

    #[test]
    fn mapless_lookup_conventions() {
        let spec = PatchSpec::SENSOR;
        let values: Vec<f32> = (0..spec.len()).map(|k| (k % 17) as f32 / 16.0).collect();
        let frame = CostmapFrame::new(0.0, spec, values.clone()).unwrap();
        let pose = Pose2D::new(3.0, -1.0, 0.4);
        // Half a pixel ahead of the vehicle is the center of the bottom-center pixel.
        let (x, y) = pose.ego_to_world(0.5 / spec.resolution, 0.0);
        let k = (spec.height_px as usize - 1) * spec.width_px as usize + spec.width_px as usize / 2;
        assert!((mapless_cost_lookup(&frame, &pose, x, y) - values[k] as f64).abs() < 1e-9);
        let (x, y) = pose.ego_to_world(10.0, 0.0);
        assert_eq!(mapless_cost_lookup(&frame, &pose, x, y), 1.0);
        let turned = Pose2D { psi: pose.psi + TAU, ..pose };
        let (x, y) = pose.ego_to_world(3.3, 0.7);
        assert!((mapless_cost_lookup(&frame, &pose, x, y) - mapless_cost_lookup(&frame, &turned, x, y)).abs() < 1e-9);
    }
}
