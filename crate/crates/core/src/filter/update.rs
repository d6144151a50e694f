use rayon::prelude::*;

use super::{log_likelihood_wheelspeed, ComparisonTemplate, FilterConfig, FilterError, ParticleSet, CHUNK};
use crate::map::SchematicMap;

/// Summary of one update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    /// Smallest cost-map mean absolute error over all particles, when a frame
    /// was used.
    pub best_mae: Option<f64>,
}

/// Adds the log-likelihood of every available measurement to each particle's
/// log weight, then renormalizes.
pub fn measurement_update(
    set: &mut ParticleSet,
    frame: Option<&ComparisonTemplate>,
    wheel: Option<f64>,
    map: &SchematicMap,
    config: &FilterConfig,
) -> Result<UpdateStats, FilterError> {
    if frame.is_none() && wheel.is_none() {
        return Err(FilterError::NoMeasurement);
    }
    if let Some(w) = wheel {
        if !(w.is_finite() && w >= 0.0) {
            return Err(FilterError::InvalidInput(format!("wheel speed must be finite and >= 0, got {w}")));
        }
    }
    let ParticleSet { particles, log_weights, .. } = set;
    let best = particles
        .par_chunks(CHUNK)
        .zip(log_weights.par_chunks_mut(CHUNK))
        .map(|(ps, lws)| {
            let mut best = f64::INFINITY;
            for (p, lw) in ps.iter().zip(lws.iter_mut()) {
                let mut inc = 0.0;
                if let Some(w) = wheel {
                    inc += log_likelihood_wheelspeed(p, w, config.sigma_wheel, config.wheel_exponent);
                }
                if let Some(t) = frame {
                    let mae = t.mae(map, p);
                    best = best.min(mae);
                    inc += config.lambda.ln() - config.lambda * mae;
                }
                *lw += inc;
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min);
    normalize_log_weights(set)?;
    Ok(UpdateStats { best_mae: frame.map(|_| best) })
}

/// Shifts log weights so their exponentials sum to one. The maximum is
/// subtracted before exponentiating.
pub fn normalize_log_weights(set: &mut ParticleSet) -> Result<(), FilterError> {
    let m = set.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() || set.log_weights.iter().any(|l| l.is_nan()) {
        set.normalized = false;
        return Err(FilterError::DegenerateWeights);
    }
    let s: f64 = set.log_weights.iter().map(|l| (l - m).exp()).sum();
    let shift = m + s.ln();
    set.log_weights.iter_mut().for_each(|l| *l -= shift);
    set.normalized = true;
    Ok(())
}
