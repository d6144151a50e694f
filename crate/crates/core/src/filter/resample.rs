use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{FilterError, ParticleSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampler {
    /// One offset in `[0, 1/N)` and `N` evenly spaced pointers.
    #[default]
    Systematic,
    /// One independent offset per stratum.
    Stratified,
    /// `N` independent draws.
    Multinomial,
}

/// `n` ancestor indices drawn from normalized `weights`.
pub fn resample_indices<R: Rng + ?Sized>(weights: &[f64], n: usize, method: Resampler, rng: &mut R) -> Vec<usize> {
    if n == 0 || weights.is_empty() {
        return Vec::new();
    }
    let step = 1.0 / n as f64;
    let mut pointers: Vec<f64> = match method {
        Resampler::Systematic => {
            let u0 = rng.random::<f64>() * step;
            (0..n).map(|k| u0 + k as f64 * step).collect()
        }
        Resampler::Stratified => (0..n).map(|k| (k as f64 + rng.random::<f64>()) * step).collect(),
        Resampler::Multinomial => {
            let mut u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            u.sort_by(f64::total_cmp);
            u
        }
    };
    // Scale pointers onto the actual total so rounding in the weights cannot
    // push the last pointer past the final cumulative sum.
    let total: f64 = weights.iter().sum();
    pointers.iter_mut().for_each(|p| *p *= total);
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut j = 0;
    for p in pointers {
        while p >= cum && j + 1 < weights.len() {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    out
}

/// Replaces the population by a resampled copy with uniform weights.
pub fn resample<R: Rng + ?Sized>(set: &mut ParticleSet, method: Resampler, rng: &mut R) -> Result<(), FilterError> {
    if !set.normalized {
        return Err(FilterError::NotNormalized);
    }
    let w = set.weights();
    let idx = resample_indices(&w, w.len(), method, rng);
    let particles = idx.iter().map(|&i| set.particles[i]).collect();
    *set = ParticleSet::uniform(particles);
    Ok(())
}
