use std::sync::Arc;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{
    estimate_weighted, initialize, measurement_update, propagate, resample, ComparisonTemplate, FilterConfig,
    FilterError, ImuSample, ParticleSet, Prior, StateEstimate, WheelSpeedSample,
};
use crate::map::SchematicMap;
use crate::rng::SimRng;
use crate::sensor::CostmapFrame;

/// Tolerance on schedule comparisons, well below any sample period.
const TICK_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResamplePolicy {
    /// Resample at the resampling rate only when ESS is below the configured
    /// fraction of N.
    #[default]
    Adaptive,
    /// Resample at every resampling tick.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterEvent {
    Divergence,
    Reinitialized,
}

/// Result of feeding one IMU sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStep {
    pub estimate: StateEstimate,
    pub measured: bool,
    pub resampled: bool,
    pub events: Vec<FilterEvent>,
}

/// Event-driven filter: wheel and frame samples are buffered, IMU samples
/// drive propagation and the measurement and resampling schedules.
pub struct ParticleFilter {
    map: Arc<SchematicMap>,
    config: FilterConfig,
    set: ParticleSet,
    weights: Vec<f64>,
    rng: SimRng,
    last_imu: Option<f64>,
    next_measurement: f64,
    next_resample: f64,
    wheel: Option<WheelSpeedSample>,
    frame: Option<ComparisonTemplate>,
    misses: usize,
    measurements: usize,
    resamples: usize,
}

impl ParticleFilter {
    pub fn new(map: Arc<SchematicMap>, config: FilterConfig, prior: &Prior, seed: u64) -> Result<Self, FilterError> {
        config.validate()?;
        let mut rng = SimRng::seed_from_u64(seed);
        let set = initialize(&map, prior, config.n_particles, &mut rng)?;
        let weights = set.weights();
        Ok(Self {
            map,
            config,
            set,
            weights,
            rng,
            last_imu: None,
            next_measurement: f64::NEG_INFINITY,
            next_resample: f64::NEG_INFINITY,
            wheel: None,
            frame: None,
            misses: 0,
            measurements: 0,
            resamples: 0,
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn particles(&self) -> &ParticleSet {
        &self.set
    }

    pub fn measurement_count(&self) -> usize {
        self.measurements
    }

    pub fn resample_count(&self) -> usize {
        self.resamples
    }

    pub fn on_wheel(&mut self, sample: WheelSpeedSample) {
        if self.config.use_wheel {
            self.wheel = Some(sample);
        }
    }

    pub fn on_frame(&mut self, frame: &CostmapFrame) -> Result<(), FilterError> {
        self.frame = Some(ComparisonTemplate::new(frame, &self.config.comparison_patch)?);
        Ok(())
    }

    pub fn estimate(&self, timestamp: f64) -> StateEstimate {
        estimate_weighted(&self.set, &self.weights, timestamp)
    }

    pub fn on_imu(&mut self, imu: &ImuSample) -> Result<FilterStep, FilterError> {
        let t = imu.timestamp;
        let dt = match self.last_imu {
            None => {
                self.next_measurement = t;
                self.next_resample = t;
                1.0 / self.config.propagate_rate
            }
            Some(prev) => t - prev,
        };
        if !(dt > 0.0) {
            return Err(FilterError::InvalidInput(format!("IMU timestamps must increase (dt = {dt})")));
        }
        propagate(&mut self.set, imu, dt, &self.config.motion_noise(), &mut self.rng)?;
        self.last_imu = Some(t);

        let mut step_events = Vec::new();
        let mut measured = false;
        let mut resampled = false;
        if t + TICK_EPS >= self.next_measurement {
            while self.next_measurement <= t + TICK_EPS {
                self.next_measurement += 1.0 / self.config.measurement_rate;
            }
            let wheel = self.wheel.take().map(|w| w.speed);
            let frame = self.frame.take();
            if wheel.is_some() || frame.is_some() {
                measured = true;
                self.measurements += 1;
                match measurement_update(&mut self.set, frame.as_ref(), wheel, &self.map, &self.config) {
                    Ok(stats) => {
                        if let Some(mae) = stats.best_mae {
                            if mae > self.config.divergence_mae {
                                self.misses += 1;
                            } else {
                                self.misses = 0;
                            }
                        }
                        if self.config.divergence_updates > 0 && self.misses >= self.config.divergence_updates {
                            self.reinitialize(&mut step_events)?;
                        }
                    }
                    Err(FilterError::DegenerateWeights) => self.reinitialize(&mut step_events)?,
                    Err(e) => return Err(e),
                }
                self.weights = self.set.weights();
            }
        }
        if t + TICK_EPS >= self.next_resample {
            while self.next_resample <= t + TICK_EPS {
                self.next_resample += 1.0 / self.config.resample_rate;
            }
            let due = match self.config.resample_policy {
                ResamplePolicy::Strict => true,
                ResamplePolicy::Adaptive => {
                    let ess = 1.0 / self.weights.iter().map(|w| w * w).sum::<f64>();
                    ess < self.config.ess_fraction * self.set.len() as f64
                }
            };
            if due {
                resample(&mut self.set, self.config.resampler, &mut self.rng)?;
                self.weights = self.set.weights();
                self.resamples += 1;
                resampled = true;
            }
        }
        Ok(FilterStep { estimate: self.estimate(t), measured, resampled, events: step_events })
    }

    fn reinitialize(&mut self, events: &mut Vec<FilterEvent>) -> Result<(), FilterError> {
        log::warn!("particle filter diverged, reinitializing uniformly on track");
        events.push(FilterEvent::Divergence);
        self.set = initialize(&self.map, &Prior::UniformOnTrack, self.config.n_particles, &mut self.rng)?;
        self.misses = 0;
        events.push(FilterEvent::Reinitialized);
        Ok(())
    }
}

/// Output of [`run_filter`].
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub estimates: Vec<StateEstimate>,
    pub measurements: usize,
    pub resamples: usize,
    pub events: Vec<(f64, FilterEvent)>,
}

/// Runs a filter over recorded streams. Wheel samples and frames are
/// delivered before any IMU sample with an equal or later timestamp.
pub fn run_filter(
    imu: &[ImuSample],
    wheel: &[WheelSpeedSample],
    frames: &[CostmapFrame],
    map: Arc<SchematicMap>,
    config: &FilterConfig,
    prior: &Prior,
    seed: u64,
) -> Result<FilterRun, FilterError> {
    let mut pf = ParticleFilter::new(map, config.clone(), prior, seed)?;
    let (mut wi, mut fi) = (0, 0);
    let mut out = FilterRun { estimates: Vec::with_capacity(imu.len()), measurements: 0, resamples: 0, events: Vec::new() };
    for s in imu {
        while wi < wheel.len() && wheel[wi].timestamp <= s.timestamp + TICK_EPS {
            pf.on_wheel(wheel[wi]);
            wi += 1;
        }
        while fi < frames.len() && frames[fi].timestamp <= s.timestamp + TICK_EPS {
            pf.on_frame(&frames[fi])?;
            fi += 1;
        }
        let step = pf.on_imu(s)?;
        out.events.extend(step.events.iter().map(|e| (s.timestamp, *e)));
        out.estimates.push(step.estimate);
    }
    out.measurements = pf.measurement_count();
    out.resamples = pf.resample_count();
    Ok(out)
}
