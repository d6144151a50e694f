use std::sync::Arc;

use super::metrics::{compute_report, MetricsReport};
use super::runlog::{Event, EventKind, Record, RunLog};
use super::scenario::InitSpec;
use super::HarnessError;
use crate::filter::{run_filter, FilterConfig, FilterEvent, ImuSample, ParticleState, Prior};
use crate::map::{Centerline, SchematicMap};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOptions {
    pub filter: FilterConfig,
    pub init: InitSpec,
    /// Master seed; defaults to the one in the log header.
    pub seed: Option<u64>,
    /// Arc-length bin width of the error profile (m).
    pub bin_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutput {
    /// The recorded log with its estimates and filter events replaced by the
    /// replayed ones.
    pub log: RunLog,
    pub report: MetricsReport,
}

/// Re-runs the particle filter over the sensor records of `log`, ignoring
/// the recorded estimates, and scores it against the recorded truth.
///
/// The filter is seeded exactly as on-policy, so replaying with the
/// original configuration reproduces the original estimate stream.
pub fn replay(
    log: &RunLog,
    map: Arc<SchematicMap>,
    centerline: Option<&Centerline>,
    opts: &ReplayOptions,
) -> Result<ReplayOutput, HarnessError> {
    let Some((_, _, header_seed)) = log.header() else {
        return Err(HarnessError::UnsupportedReplay("log has no header".into()));
    };
    let Some(first) = log.truth().next() else {
        return Err(HarnessError::UnsupportedReplay("log has no ground-truth records".into()));
    };
    let imu: Vec<ImuSample> = log.imu().copied().collect();
    if imu.is_empty() {
        return Err(HarnessError::UnsupportedReplay("log has no IMU records".into()));
    }
    let wheel: Vec<_> = log.wheel().copied().collect();
    let frames: Vec<_> = log.frames().cloned().collect();
    let prior = match opts.init {
        InitSpec::KnownPose { std } => Prior::KnownPose {
            mean: ParticleState {
                p_x: first.body.x,
                p_y: first.body.y,
                psi: first.body.psi,
                v_x: first.body.v_x,
                v_y: first.body.v_y,
            },
            std,
        },
        InitSpec::UniformOnTrack => Prior::UniformOnTrack,
    };
    let seed = derive_seed(opts.seed.unwrap_or(header_seed), "filter");
    let run = run_filter(&imu, &wheel, &frames, Arc::clone(&map), &opts.filter, &prior, seed)
        .map_err(|e| HarnessError::Runtime(format!("filter failed during replay: {e}")))?;

    // Splice the new estimates in after each IMU record, in place of the
    // recorded ones.
    let mut records = Vec::with_capacity(log.records.len());
    let (mut k, mut ev) = (0, 0);
    for rec in &log.records {
        match rec {
            Record::Estimate(_) => continue,
            Record::Event(e) if matches!(e.kind, EventKind::Divergence | EventKind::Reinitialized) => continue,
            _ => records.push(rec.clone()),
        }
        if let Record::Imu(s) = rec {
            while ev < run.events.len() && run.events[ev].0 <= s.timestamp {
                let kind = match run.events[ev].1 {
                    FilterEvent::Divergence => EventKind::Divergence,
                    FilterEvent::Reinitialized => EventKind::Reinitialized,
                };
                records.push(Record::Event(Event { t: run.events[ev].0, kind, value: 0.0, note: String::new() }));
                ev += 1;
            }
            records.push(Record::Estimate(run.estimates[k]));
            k += 1;
        }
    }
    let out = RunLog { records, truncated: log.truncated };
    let report = compute_report(&out, centerline, Some(&map), opts.bin_width)?;
    Ok(ReplayOutput { log: out, report })
}
