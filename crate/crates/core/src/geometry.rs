//! Planar poses, angle wrapping and raster interpolation shared by the map,
//! sensor and controller modules.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

/// Wraps an angle into `(-π, π]`.
///
/// Angles already inside the interval are returned unchanged.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Vehicle pose in the world (map) frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub p_x: f64,
    pub p_y: f64,
    pub psi: f64,
}

impl Pose2D {
    pub fn new(p_x: f64, p_y: f64, psi: f64) -> Self {
        Self { p_x, p_y, psi: wrap_angle(psi) }
    }

    pub fn is_finite(&self) -> bool {
        self.p_x.is_finite() && self.p_y.is_finite() && self.psi.is_finite()
    }

    /// Maps an egocentric offset (`forward`, `left`) to world coordinates.
    #[inline]
    pub fn ego_to_world(&self, forward: f64, left: f64) -> (f64, f64) {
        let (s, c) = self.psi.sin_cos();
        (self.p_x + forward * c - left * s, self.p_y + forward * s + left * c)
    }

    /// Maps a world point into this pose's egocentric (`forward`, `left`) frame.
    #[inline]
    pub fn world_to_ego(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.psi.sin_cos();
        let dx = x - self.p_x;
        let dy = y - self.p_y;
        (dx * c + dy * s, -dx * s + dy * c)
    }
}

/// Bilinear interpolation on a row-major `f32` raster addressed in fractional
/// pixel-center coordinates (pixel `(i, j)` has its center at `(i, j)`).
///
/// Points up to half a pixel beyond the outer pixel centers are clamped onto
/// the border; anything further out returns `None`.
#[inline]
pub fn bilinear(values: &[f32], width: usize, height: usize, fx: f64, fy: f64) -> Option<f64> {
    let wmax = width as f64 - 0.5;
    let hmax = height as f64 - 0.5;
    // Written so that NaN coordinates fall through to `None`.
    if !(fx >= -0.5 && fx <= wmax && fy >= -0.5 && fy <= hmax) {
        return None;
    }
    let fx = fx.clamp(0.0, (width - 1) as f64);
    let fy = fy.clamp(0.0, (height - 1) as f64);
    let i0 = (fx as usize).min(width.saturating_sub(2));
    let j0 = (fy as usize).min(height.saturating_sub(2));
    let i1 = (i0 + 1).min(width - 1);
    let j1 = (j0 + 1).min(height - 1);
    let tx = fx - i0 as f64;
    let ty = fy - j0 as f64;
    let v00 = values[j0 * width + i0] as f64;
    let v10 = values[j0 * width + i1] as f64;
    let v01 = values[j1 * width + i0] as f64;
    let v11 = values[j1 * width + i1] as f64;
    let top = v00 + (v10 - v00) * tx;
    let bottom = v01 + (v11 - v01) * tx;
    Some(top + (bottom - top) * ty)
}
