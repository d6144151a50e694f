use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{CostmapFrame, SensorError};
use crate::geometry::Pose2D;
use crate::map::{extract_local_patch, LocalPatch, PatchSpec, SchematicMap};
use crate::rng::chunk_rng;

/// Synthetic stand-in for the learned cost-map predictor's errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DegradationParams {
    /// Std of i.i.d. Gaussian pixel noise, in cost units.
    pub pixel_noise_sigma: f64,
    /// Box-blur radius in pixels.
    pub blur_radius_px: u32,
    /// Per-frame probability that the frame is replaced by a constant 0.5.
    pub dropout_prob: f64,
    /// Heading error of the rendered view (rad).
    pub heading_bias: f64,
    /// Lateral (leftward) offset of the rendered view (m).
    pub lateral_bias: f64,
    /// Delay between the depicted instant and the frame timestamp (s).
    pub latency: f64,
    /// When set, `pixel_noise_sigma` is calibrated to hit this mean accuracy.
    pub target_accuracy: Option<f64>,
}

impl Default for DegradationParams {
    fn default() -> Self {
        Self {
            pixel_noise_sigma: 0.0,
            blur_radius_px: 0,
            dropout_prob: 0.0,
            heading_bias: 0.0,
            lateral_bias: 0.0,
            latency: 0.0,
            target_accuracy: None,
        }
    }
}

impl DegradationParams {
    pub fn validate(&self) -> Result<(), SensorError> {
        let bad = |what: &str| Err(SensorError::InvalidInput(what.to_string()));
        if !(self.pixel_noise_sigma.is_finite() && self.pixel_noise_sigma >= 0.0) {
            return bad("pixel_noise_sigma must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return bad("dropout_prob must be in [0, 1]");
        }
        if !(self.latency.is_finite() && self.latency >= 0.0) {
            return bad("latency must be finite and >= 0");
        }
        if !(self.heading_bias.is_finite() && self.lateral_bias.is_finite()) {
            return bad("biases must be finite");
        }
        if let Some(t) = self.target_accuracy {
            if !(t > 0.0 && t <= 1.0) {
                return bad("target_accuracy must be in (0, 1]");
            }
        }
        Ok(())
    }
}

fn box_blur(values: &mut [f64], w: usize, h: usize, r: usize) {
    if r == 0 {
        return;
    }
    let mut tmp = vec![0.0; values.len()];
    for j in 0..h {
        for i in 0..w {
            let (lo, hi) = (i.saturating_sub(r), (i + r).min(w - 1));
            let s: f64 = values[j * w + lo..=j * w + hi].iter().sum();
            tmp[j * w + i] = s / (hi - lo + 1) as f64;
        }
    }
    for i in 0..w {
        for j in 0..h {
            let (lo, hi) = (j.saturating_sub(r), (j + r).min(h - 1));
            let s: f64 = (lo..=hi).map(|k| tmp[k * w + i]).sum();
            values[j * w + i] = s / (hi - lo + 1) as f64;
        }
    }
}

/// Renders a degraded observation of the map from `true_pose`.
///
/// The view is taken from the pose displaced by the heading/lateral biases,
/// blurred, corrupted by pixel noise and clamped; with probability
/// `dropout_prob` the frame is a constant 0.5 instead. The timestamp is
/// `capture_time + latency`.
pub fn synth_observe<R: Rng + ?Sized>(
    map: &SchematicMap,
    true_pose: &Pose2D,
    spec: &PatchSpec,
    params: &DegradationParams,
    capture_time: f64,
    rng: &mut R,
) -> CostmapFrame {
    let timestamp = capture_time + params.latency;
    let u: f64 = rng.random();
    if u < params.dropout_prob {
        return CostmapFrame::constant(timestamp, *spec, 0.5);
    }
    let psi = true_pose.psi + params.heading_bias;
    let (s, c) = true_pose.psi.sin_cos();
    let view = Pose2D::new(
        true_pose.p_x - s * params.lateral_bias,
        true_pose.p_y + c * params.lateral_bias,
        psi,
    );
    let mut values = extract_local_patch(map, &view, spec).values;
    box_blur(&mut values, spec.width_px as usize, spec.height_px as usize, params.blur_radius_px as usize);
    let sigma = params.pixel_noise_sigma;
    let values = values
        .into_iter()
        .map(|v| {
            let n = if sigma > 0.0 { sigma * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
            (v + n).clamp(0.0, 1.0) as f32
        })
        .collect();
    CostmapFrame { timestamp, spec: *spec, values }
}

/// `1 - mean |a - b|` over paired pixels.
pub fn pixel_accuracy(a: impl ExactSizeIterator<Item = f64>, b: impl ExactSizeIterator<Item = f64>) -> Result<f64, SensorError> {
    if a.len() != b.len() {
        return Err(SensorError::InvalidInput(format!("image sizes differ: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n == 0 {
        return Err(SensorError::InvalidInput("empty images".into()));
    }
    let sum: f64 = a.zip(b).map(|(x, y)| (x - y).abs()).sum();
    Ok(1.0 - sum / n as f64)
}

/// Per-pixel frame accuracy of an observation against the true local patch.
pub fn frame_accuracy(frame: &CostmapFrame, truth: &LocalPatch) -> Result<f64, SensorError> {
    if frame.spec.width_px != truth.spec.width_px || frame.spec.height_px != truth.spec.height_px {
        return Err(SensorError::InvalidInput(format!(
            "frame is {}x{}, truth is {}x{}",
            frame.spec.width_px, frame.spec.height_px, truth.spec.width_px, truth.spec.height_px
        )));
    }
    pixel_accuracy(frame.values.iter().map(|v| *v as f64), truth.values.iter().copied())
}

/// Per-pixel accuracy between two frames (symmetric).
pub fn frames_accuracy(a: &CostmapFrame, b: &CostmapFrame) -> Result<f64, SensorError> {
    if a.spec.width_px != b.spec.width_px || a.spec.height_px != b.spec.height_px {
        return Err(SensorError::InvalidInput("frame dimensions differ".into()));
    }
    pixel_accuracy(a.values.iter().map(|v| *v as f64), b.values.iter().map(|v| *v as f64))
}

/// Monte-Carlo settings for [`calibrate_degradation`].
#[derive(Debug, Clone, Copy)]
pub struct CalibrationSpec {
    /// Frames per accuracy evaluation; poses are cycled if fewer.
    pub n_frames: usize,
    pub seed: u64,
    /// Accepted deviation of the achieved mean accuracy from the target.
    pub tolerance: f64,
    /// Upper end of the noise-sigma search interval.
    pub sigma_max: f64,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        Self { n_frames: 1000, seed: 0x5eed, tolerance: 0.01, sigma_max: 8.0 }
    }
}

fn mean_accuracy(
    map: &SchematicMap,
    poses: &[Pose2D],
    truths: &[LocalPatch],
    spec: &PatchSpec,
    params: &DegradationParams,
    cal: &CalibrationSpec,
) -> f64 {
    let total: f64 = (0..cal.n_frames)
        .map(|k| {
            let mut rng = chunk_rng(cal.seed, k as u64, 0);
            let frame = synth_observe(map, &poses[k % poses.len()], spec, params, 0.0, &mut rng);
            frame_accuracy(&frame, &truths[k % poses.len()]).expect("same spec")
        })
        .sum();
    total / cal.n_frames as f64
}

/// Chooses `pixel_noise_sigma` (other fields of `base` fixed) so that the
/// Monte-Carlo mean accuracy over `poses` matches `target`.
///
/// Common random numbers make the accuracy monotone in sigma, so a plain
/// bisection converges.
pub fn calibrate_degradation(
    map: &SchematicMap,
    poses: &[Pose2D],
    spec: &PatchSpec,
    target: f64,
    base: &DegradationParams,
    cal: &CalibrationSpec,
) -> Result<DegradationParams, SensorError> {
    if !(0.0..=1.0).contains(&target) {
        return Err(SensorError::InvalidInput(format!("target accuracy {target} outside [0, 1]")));
    }
    if poses.is_empty() || cal.n_frames == 0 {
        return Err(SensorError::InvalidInput("calibration needs at least one pose and frame".into()));
    }
    let truths: Vec<LocalPatch> = poses.iter().map(|p| extract_local_patch(map, p, spec)).collect();
    let eval = |sigma: f64| {
        let params = DegradationParams { pixel_noise_sigma: sigma, ..*base };
        mean_accuracy(map, poses, &truths, spec, &params, cal)
    };
    let acc_clean = eval(0.0);
    let acc_noisy = eval(cal.sigma_max);
    if target > acc_clean + cal.tolerance || target < acc_noisy - cal.tolerance {
        return Err(SensorError::CalibrationFailed { target, lo: acc_noisy, hi: acc_clean });
    }
    let done = |sigma: f64| DegradationParams { pixel_noise_sigma: sigma, target_accuracy: Some(target), ..*base };
    if acc_clean <= target + cal.tolerance / 10.0 {
        return Ok(done(0.0));
    }
    let (mut lo, mut hi) = (0.0, cal.sigma_max);
    let mut sigma = 0.5 * (lo + hi);
    for _ in 0..60 {
        sigma = 0.5 * (lo + hi);
        let acc = eval(sigma);
        if (acc - target).abs() < cal.tolerance / 10.0 {
            break;
        }
        if acc > target {
            lo = sigma;
        } else {
            hi = sigma;
        }
    }
    Ok(done(sigma))
}
