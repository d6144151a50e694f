use serde::{Deserialize, Serialize};

use super::SchematicMap;
use crate::geometry::{wrap_angle, Pose2D};

/// Geometry of an egocentric raster: the vehicle sits at the bottom-center
/// pixel column (`width_px / 2`) facing up (towards row 0), with the bottom
/// edge `longitudinal_offset` meters ahead of the vehicle origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSpec {
    pub width_px: u32,
    pub height_px: u32,
    /// Pixels per meter.
    pub resolution: f64,
    #[serde(default)]
    pub longitudinal_offset: f64,
}

impl PatchSpec {
    /// 5 m wide by 7 m deep sensor frame at 8 px/m.
    pub const SENSOR: PatchSpec =
        PatchSpec { width_px: 40, height_px: 56, resolution: 8.0, longitudinal_offset: 0.0 };

    /// 35 x 25 px comparison window used by the filter likelihood; it is the
    /// pixel-aligned center crop of [`PatchSpec::SENSOR`] (columns 3..38,
    /// rows 15..40).
    pub const COMPARISON: PatchSpec =
        PatchSpec { width_px: 35, height_px: 25, resolution: 8.0, longitudinal_offset: 2.0 };

    /// 160 x 128 px at 15 px/m (10.7 m x 8.5 m), large enough to plan on directly.
    pub const WIDE: PatchSpec =
        PatchSpec { width_px: 160, height_px: 128, resolution: 15.0, longitudinal_offset: 0.0 };

    pub fn len(&self) -> usize {
        self.width_px as usize * self.height_px as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_valid(&self) -> bool {
        self.width_px > 0
            && self.height_px > 0
            && self.resolution.is_finite()
            && self.resolution > 0.0
            && self.longitudinal_offset.is_finite()
    }

    /// Egocentric (`forward`, `left`) offset in meters of pixel `(u, v)`'s center.
    #[inline]
    pub fn pixel_offset(&self, u: usize, v: usize) -> (f64, f64) {
        let forward =
            self.longitudinal_offset + ((self.height_px as usize - 1 - v) as f64 + 0.5) / self.resolution;
        let left = ((self.width_px / 2) as f64 - u as f64) / self.resolution;
        (forward, left)
    }

    /// Fractional pixel coordinates (`u`, `v`) of an egocentric offset; the
    /// inverse of [`PatchSpec::pixel_offset`].
    #[inline]
    pub fn ego_to_pixel(&self, forward: f64, left: f64) -> (f64, f64) {
        let u = (self.width_px / 2) as f64 - left * self.resolution;
        let v = self.height_px as f64 - 0.5 - (forward - self.longitudinal_offset) * self.resolution;
        (u, v)
    }

    /// Egocentric offsets of every pixel in row-major order.
    pub fn offsets(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for v in 0..self.height_px as usize {
            for u in 0..self.width_px as usize {
                out.push(self.pixel_offset(u, v));
            }
        }
        out
    }
}

impl Default for PatchSpec {
    fn default() -> Self {
        Self::SENSOR
    }
}

/// A slice of the global map seen from a pose.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPatch {
    pub spec: PatchSpec,
    pub values: Vec<f64>,
    /// `false` where the pixel fell outside the global map (value is then 1).
    pub valid: Vec<bool>,
}

impl LocalPatch {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Samples `map` at every pixel center of `spec` placed at `pose`.
pub fn extract_local_patch(map: &SchematicMap, pose: &Pose2D, spec: &PatchSpec) -> LocalPatch {
    let pose = Pose2D { psi: wrap_angle(pose.psi), ..*pose };
    let mut values = Vec::with_capacity(spec.len());
    let mut valid = Vec::with_capacity(spec.len());
    for v in 0..spec.height_px as usize {
        for u in 0..spec.width_px as usize {
            let (f, l) = spec.pixel_offset(u, v);
            let (x, y) = pose.ego_to_world(f, l);
            match map.sample(x, y) {
                Some(c) => {
                    values.push(c);
                    valid.push(true);
                }
                None => {
                    values.push(1.0);
                    valid.push(false);
                }
            }
        }
    }
    LocalPatch { spec: *spec, values, valid }
}
