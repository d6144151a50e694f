use serde::{Deserialize, Serialize};

use super::{FilterError, ParticleState};
use crate::map::{PatchSpec, SchematicMap};
use crate::sensor::CostmapFrame;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Exponent form of the wheel-speed Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WheelExponent {
    /// `−(|v_x| − W)² / (2σ²)`.
    #[default]
    Variance,
    /// `−(|v_x| − W)² / (2σ)`, normalized with the same constant as the
    /// variance form.
    StdDev,
}

/// Log-density of a wheel-speed reading `w` given a particle. The density is
/// centered on `|v_x|` since the wheels only report speed.
#[inline]
pub fn log_likelihood_wheelspeed(p: &ParticleState, w: f64, sigma: f64, form: WheelExponent) -> f64 {
    let d = p.v_x.abs() - w;
    let denom = match form {
        WheelExponent::Variance => 2.0 * sigma * sigma,
        WheelExponent::StdDev => 2.0 * sigma,
    };
    -LN_SQRT_2PI - sigma.ln() - d * d / denom
}

/// A sensor frame resampled onto the filter's comparison window.
///
/// Each comparison pixel keeps the value of the nearest frame pixel.
/// Comparison pixels with no frame pixel underneath are dropped. Pixels are
/// grouped into runs along patch rows so the map walk can step incrementally.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTemplate {
    pub timestamp: f64,
    spec: PatchSpec,
    runs: Vec<Run>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Run {
    /// Egocentric offset of the first pixel.
    forward: f64,
    left: f64,
    /// First pixel's index into `values`, and the pixel count.
    start: usize,
    len: usize,
}

impl ComparisonTemplate {
    pub fn new(frame: &CostmapFrame, spec: &PatchSpec) -> Result<Self, FilterError> {
        if !spec.is_valid() {
            return Err(FilterError::InvalidInput("invalid comparison patch".into()));
        }
        let (fw, fh) = (frame.width() as f64, frame.height() as f64);
        let mut runs: Vec<Run> = Vec::new();
        let mut values = Vec::with_capacity(spec.len());
        for v in 0..spec.height_px as usize {
            let mut open = false;
            for u in 0..spec.width_px as usize {
                let (f, l) = spec.pixel_offset(u, v);
                let (fu, fv) = frame.spec.ego_to_pixel(f, l);
                let (iu, iv) = (fu.round(), fv.round());
                if iu >= 0.0 && iu < fw && iv >= 0.0 && iv < fh {
                    if !open {
                        runs.push(Run { forward: f, left: l, start: values.len(), len: 0 });
                        open = true;
                    }
                    runs.last_mut().unwrap().len += 1;
                    values.push(frame.values[iv as usize * frame.width() + iu as usize] as f64);
                } else {
                    open = false;
                }
            }
        }
        Ok(Self { timestamp: frame.timestamp, spec: *spec, runs, values })
    }

    /// Number of compared pixels.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(forward, left, observed)` for every compared pixel.
    pub fn pixels(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let step = 1.0 / self.spec.resolution;
        self.runs.iter().flat_map(move |r| {
            (0..r.len).map(move |k| (r.forward, r.left - k as f64 * step, self.values[r.start + k]))
        })
    }

    /// Mean absolute difference between the template and the map seen from
    /// `p`, over pixels that land on the map; one when none do.
    #[inline]
    pub fn mae(&self, map: &SchematicMap, p: &ParticleState) -> f64 {
        let res = map.resolution();
        let (ox, oy) = map.origin();
        let (s, c) = p.psi.sin_cos();
        let (s, c) = (s * res, c * res);
        let bx = (p.p_x - ox) * res;
        let by = (p.p_y - oy) * res;
        // One pixel step to the right is one patch pixel less "left".
        let step = 1.0 / self.spec.resolution;
        let (dx, dy) = (step * s, -step * c);
        let (w, h) = (map.width(), map.height());
        let (wl, hl) = ((w - 1) as f64, (h - 1) as f64);
        let cost = map.cost_f64();
        let mut sum = 0.0;
        let mut n = 0usize;
        for r in &self.runs {
            let fx0 = bx + r.forward * c - r.left * s;
            let fy0 = by + r.forward * s + r.left * c;
            let obs = &self.values[r.start..r.start + r.len];
            let (fx1, fy1) = (fx0 + dx * (r.len - 1) as f64, fy0 + dy * (r.len - 1) as f64);
            // The margin absorbs rounding between the endpoint product and
            // the accumulated steps below.
            let interior = |x: f64, y: f64| x >= 1e-6 && y >= 1e-6 && x < wl - 1e-6 && y < hl - 1e-6;
            if interior(fx0, fy0) && interior(fx1, fy1) {
                let (mut fx, mut fy) = (fx0, fy0);
                for &o in obs {
                    // i32 conversions are single instructions; the run is
                    // known to be inside the raster.
                    let (i, j) = (fx as i32, fy as i32);
                    let (tx, ty) = (fx - i as f64, fy - j as f64);
                    let q = j as usize * w + i as usize;
                    let (a, b) = (cost[q], cost[q + 1]);
                    let (cc, d) = (cost[q + w], cost[q + w + 1]);
                    let top = a + (b - a) * tx;
                    let bottom = cc + (d - cc) * tx;
                    sum += (top + (bottom - top) * ty - o).abs();
                    fx += dx;
                    fy += dy;
                }
                n += obs.len();
            } else {
                for (k, &o) in obs.iter().enumerate() {
                    if let Some(m) = map.sample_cell(fx0 + dx * k as f64, fy0 + dy * k as f64) {
                        sum += (m - o).abs();
                        n += 1;
                    }
                }
            }
        }
        if n == 0 {
            1.0
        } else {
            sum / n as f64
        }
    }

    #[inline]
    pub fn log_likelihood(&self, map: &SchematicMap, p: &ParticleState, lambda: f64) -> f64 {
        lambda.ln() - lambda * self.mae(map, p)
    }
}

/// Exponential likelihood of the mean absolute error between `frame` and the
/// map patch at the particle pose, evaluated on the `comparison` window.
pub fn log_likelihood_costmap(
    p: &ParticleState,
    frame: &CostmapFrame,
    map: &SchematicMap,
    lambda: f64,
    comparison: &PatchSpec,
) -> Result<f64, FilterError> {
    Ok(ComparisonTemplate::new(frame, comparison)?.log_likelihood(map, p, lambda))
}
