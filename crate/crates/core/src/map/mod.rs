//! Global schematic cost map built from a surveyed track centerline.
//!
//! The map is a raster of traversal cost in `[0, 1]`: zero on the centerline,
//! rising linearly with distance and saturating at one on and beyond the track
//! edge. It is immutable once built and all queries are pure, so a single
//! instance can be shared (`Arc`) between the filter, the planner and the
//! simulator.

mod centerline;
mod io;
mod patch;
pub mod track;

pub use centerline::{point_segment_distance, Centerline, TrackProjection};
pub use io::{load_map, read_map, save_map, write_map, MAP_FORMAT_VERSION, MAP_MAGIC};
pub use patch::{extract_local_patch, LocalPatch, PatchSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::bilinear;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("map format error: {0}")]
    Format(String),
    #[error("truncated map payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parameters for [`build_map`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapBuildParams {
    /// Pixels per meter.
    pub resolution: f64,
    /// Distance from the centerline (m) at which cost saturates to one.
    pub track_halfwidth: f64,
    /// Margin (m) added around the centerline bounding box.
    pub extent_margin: f64,
    /// Ramp steepness; cost is `clamp(slope * d / halfwidth, 0, 1)`. Must be
    /// at least one so that every cell beyond the halfwidth costs one.
    pub ramp_slope: f64,
}

impl Default for MapBuildParams {
    fn default() -> Self {
        Self { resolution: 15.0, track_halfwidth: 2.0, extent_margin: 4.0, ramp_slope: 1.0 }
    }
}

/// Row-major raster of track cost.
///
/// Cell `(i, j)` (column, row) has its center at
/// `origin + (i, j) / resolution`; rows grow along world `+y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchematicMap {
    width: u32,
    height: u32,
    resolution: f32,
    origin: [f32; 2],
    track_halfwidth: f32,
    cost: Vec<f32>,
    /// `cost` widened once, for hot lookup loops.
    wide: Vec<f64>,
}

impl SchematicMap {
    /// Assembles a map from raw parts, validating every invariant.
    pub fn from_parts(
        width: u32,
        height: u32,
        resolution: f32,
        origin: [f32; 2],
        track_halfwidth: f32,
        cost: Vec<f32>,
    ) -> Result<Self, MapError> {
        if width == 0 || height == 0 {
            return Err(MapError::InvalidInput(format!("empty map {width}x{height}")));
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(MapError::InvalidInput(format!("bad resolution {resolution}")));
        }
        if !(origin[0].is_finite() && origin[1].is_finite()) {
            return Err(MapError::InvalidInput("non-finite origin".into()));
        }
        if !(track_halfwidth.is_finite() && track_halfwidth > 0.0) {
            return Err(MapError::InvalidInput(format!("bad track halfwidth {track_halfwidth}")));
        }
        if cost.len() != width as usize * height as usize {
            return Err(MapError::InvalidInput(format!(
                "cost grid has {} cells, expected {}",
                cost.len(),
                width as usize * height as usize
            )));
        }
        if let Some(bad) = cost.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(MapError::InvalidInput(format!("cell cost {bad} outside [0, 1]")));
        }
        let wide = cost.iter().map(|c| *c as f64).collect();
        Ok(Self { width, height, resolution, origin, track_halfwidth, cost, wide })
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn height(&self) -> usize {
        self.height as usize
    }

    pub fn resolution(&self) -> f64 {
        self.resolution as f64
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.origin[0] as f64, self.origin[1] as f64)
    }

    pub fn track_halfwidth(&self) -> f64 {
        self.track_halfwidth as f64
    }

    pub fn cost(&self) -> &[f32] {
        &self.cost
    }

    /// Cell costs widened to `f64`, row-major.
    pub fn cost_f64(&self) -> &[f64] {
        &self.wide
    }

    pub fn cell(&self, i: usize, j: usize) -> f32 {
        self.cost[j * self.width as usize + i]
    }

    /// World coordinates of the center of cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        let res = self.resolution();
        let (ox, oy) = self.origin();
        (ox + i as f64 / res, oy + j as f64 / res)
    }

    /// Bilinear cost lookup; `None` outside the raster.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let res = self.resolution as f64;
        let fx = (x - self.origin[0] as f64) * res;
        let fy = (y - self.origin[1] as f64) * res;
        bilinear(&self.cost, self.width as usize, self.height as usize, fx, fy)
    }

    /// Bilinear lookup in fractional cell coordinates; `None` off the raster.
    #[inline(always)]
    pub fn sample_cell(&self, fx: f64, fy: f64) -> Option<f64> {
        let (w, h) = (self.width as usize, self.height as usize);
        if fx >= 0.0 && fy >= 0.0 && fx < (w - 1) as f64 && fy < (h - 1) as f64 {
            let (i, j) = (fx as i32, fy as i32);
            let (tx, ty) = (fx - i as f64, fy - j as f64);
            let k = j as usize * w + i as usize;
            let row0 = &self.cost[k..k + 2];
            let row1 = &self.cost[k + w..k + w + 2];
            let top = row0[0] as f64 + (row0[1] as f64 - row0[0] as f64) * tx;
            let bottom = row1[0] as f64 + (row1[1] as f64 - row1[0] as f64) * tx;
            return Some(top + (bottom - top) * ty);
        }
        bilinear(&self.cost, w, h, fx, fy)
    }

    /// Positional track cost at a world point; points off the raster cost one.
    #[inline]
    pub fn query_cost(&self, x: f64, y: f64) -> f64 {
        let res = self.resolution as f64;
        let fx = (x - self.origin[0] as f64) * res;
        let fy = (y - self.origin[1] as f64) * res;
        self.sample_cell(fx, fy).unwrap_or(1.0)
    }

    /// World-frame bounds `(min_x, min_y, max_x, max_y)` of the sampled area.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        let res = self.resolution();
        let (ox, oy) = self.origin();
        (
            ox - 0.5 / res,
            oy - 0.5 / res,
            ox + (self.width as f64 - 0.5) / res,
            oy + (self.height as f64 - 0.5) / res,
        )
    }
}

/// Builds the schematic map as an exact distance transform of `centerline`.
///
/// Only cells within the saturation distance of a segment are visited per
/// segment; everything else stays at cost one, which is exactly the clamped
/// value, so the result equals a brute-force evaluation over all segments.
pub fn build_map(centerline: &Centerline, params: &MapBuildParams) -> Result<SchematicMap, MapError> {
    let MapBuildParams { resolution, track_halfwidth, extent_margin, ramp_slope } = *params;
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(MapError::InvalidInput(format!("resolution must be > 0, got {resolution}")));
    }
    if !(track_halfwidth.is_finite() && track_halfwidth > 0.0) {
        return Err(MapError::InvalidInput(format!(
            "track halfwidth must be > 0, got {track_halfwidth}"
        )));
    }
    if !(extent_margin.is_finite() && extent_margin >= 0.0) {
        return Err(MapError::InvalidInput(format!("extent margin must be >= 0, got {extent_margin}")));
    }
    if !(ramp_slope.is_finite() && ramp_slope >= 1.0) {
        return Err(MapError::InvalidInput(format!("ramp slope must be >= 1, got {ramp_slope}")));
    }

    let (min_x, min_y, max_x, max_y) = centerline.bounds();
    let origin = [(min_x - extent_margin) as f32, (min_y - extent_margin) as f32];
    let res32 = resolution as f32;
    let res = res32 as f64;
    let width = (((max_x + extent_margin) - origin[0] as f64) * res).ceil() as u32 + 1;
    let height = (((max_y + extent_margin) - origin[1] as f64) * res).ceil() as u32 + 1;
    let (w, h) = (width as usize, height as usize);

    let saturation = track_halfwidth / ramp_slope;
    let mut dist = vec![f64::INFINITY; w * h];
    let (ox, oy) = (origin[0] as f64, origin[1] as f64);
    for (a, b) in centerline.segments() {
        let lo_x = a[0].min(b[0]) - saturation;
        let hi_x = a[0].max(b[0]) + saturation;
        let lo_y = a[1].min(b[1]) - saturation;
        let hi_y = a[1].max(b[1]) + saturation;
        let i0 = (((lo_x - ox) * res).floor().max(0.0) as usize).min(w - 1);
        let i1 = (((hi_x - ox) * res).ceil().max(0.0) as usize).min(w - 1);
        let j0 = (((lo_y - oy) * res).floor().max(0.0) as usize).min(h - 1);
        let j1 = (((hi_y - oy) * res).ceil().max(0.0) as usize).min(h - 1);
        for j in j0..=j1 {
            let y = oy + j as f64 / res;
            let row = &mut dist[j * w..(j + 1) * w];
            for (i, d) in row.iter_mut().enumerate().take(i1 + 1).skip(i0) {
                let x = ox + i as f64 / res;
                let di = point_segment_distance([x, y], a, b);
                if di < *d {
                    *d = di;
                }
            }
        }
    }
    let cost = dist
        .into_iter()
        .map(|d| (ramp_slope * d / track_halfwidth).clamp(0.0, 1.0) as f32)
        .collect();
    SchematicMap::from_parts(width, height, res32, origin, track_halfwidth as f32, cost)
}
