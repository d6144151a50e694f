use std::fmt;

use super::runlog::{EventKind, RunLog};
use super::HarnessError;
use crate::geometry::Pose2D;
use crate::map::{extract_local_patch, Centerline, SchematicMap};
use crate::sensor::frame_accuracy;
use crate::sim::SimState;

/// Timestamps closer than this are the same instant.
const MATCH_EPS: f64 = 1e-6;
/// Slip angles are only meaningful once the vehicle is actually moving.
const SLIP_MIN_SPEED: f64 = 2.0;

/// Position error aggregated over one arc-length bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBin {
    /// Bin center along the track (m).
    pub arc_length_m: f64,
    pub mean_error_m: f64,
    pub max_error_m: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub speed: f64,
    /// `atan2(v_y, |v_x|)` in degrees.
    pub slip_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    /// Estimates matched to a truth record.
    pub matched: usize,
    pub mean_error: Option<f64>,
    pub max_error: Option<f64>,
    /// Per-estimate `(t, error)` pairs.
    pub errors: Vec<(f64, f64)>,
    pub profile: Vec<ErrorBin>,
    pub lap_times: Vec<f64>,
    pub trace: Vec<TracePoint>,
    pub mean_speed: f64,
    pub max_speed: f64,
    /// Largest slip magnitude while moving faster than 2 m/s.
    pub max_slip_deg: f64,
    /// Mean per-pixel frame accuracy against the map, when a map is given.
    pub mean_accuracy: Option<f64>,
    pub crashes: usize,
    pub divergences: usize,
    pub reinitializations: usize,
    pub emergencies: usize,
    pub failures: usize,
    /// Span of the ground truth (s).
    pub duration: f64,
    pub truncated: bool,
    pub notes: Vec<String>,
}

impl MetricsReport {
    /// Mean error over estimates in `[t0, t1]`.
    pub fn mean_error_between(&self, t0: f64, t1: f64) -> Option<f64> {
        let sel: Vec<f64> = self.errors.iter().filter(|(t, _)| *t >= t0 && *t <= t1).map(|(_, e)| *e).collect();
        (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
    }

    pub fn mean_lap_time(&self) -> Option<f64> {
        (!self.lap_times.is_empty()).then(|| self.lap_times.iter().sum::<f64>() / self.lap_times.len() as f64)
    }

    /// Error profile as CSV.
    pub fn profile_csv(&self) -> String {
        let mut s = String::from("arc_length_m,mean_error_m,max_error_m\n");
        for b in &self.profile {
            s.push_str(&format!("{:.3},{:.6},{:.6}\n", b.arc_length_m, b.mean_error_m, b.max_error_m));
        }
        s
    }
}

fn fmt_opt(v: Option<f64>, unit: &str) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}{unit}"))
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "duration          {:.3} s", self.duration)?;
        writeln!(f, "matched estimates {}", self.matched)?;
        writeln!(f, "mean error        {}", fmt_opt(self.mean_error, " m"))?;
        writeln!(f, "max error         {}", fmt_opt(self.max_error, " m"))?;
        let laps: Vec<String> = self.lap_times.iter().map(|t| format!("{t:.3}")).collect();
        writeln!(f, "lap times         [{}] s", laps.join(", "))?;
        writeln!(f, "mean speed        {:.3} m/s (max {:.3})", self.mean_speed, self.max_speed)?;
        writeln!(f, "max slip angle    {:.2} deg", self.max_slip_deg)?;
        writeln!(f, "mean accuracy     {}", fmt_opt(self.mean_accuracy, ""))?;
        writeln!(
            f,
            "events            crashes {}, divergences {}, reinitializations {}, emergencies {}, failures {}",
            self.crashes, self.divergences, self.reinitializations, self.emergencies, self.failures
        )?;
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        Ok(())
    }
}

/// Truth record at `t`, if one exists. `truth` must be sorted by time.
fn truth_at<'a>(truth: &[&'a SimState], t: f64) -> Option<&'a SimState> {
    let k = truth.partition_point(|s| s.t < t - MATCH_EPS);
    truth.get(k).filter(|s| (s.t - t).abs() <= MATCH_EPS).copied()
}

/// Computes the report for a log.
///
/// `centerline` enables the arc-length error profile (bins of `bin_width`
/// meters); `map` enables the frame accuracy, which compares each frame with
/// the map patch at the true pose of its timestamp.
pub fn compute_report(
    log: &RunLog,
    centerline: Option<&Centerline>,
    map: Option<&SchematicMap>,
    bin_width: f64,
) -> Result<MetricsReport, HarnessError> {
    let truth: Vec<&SimState> = log.truth().collect();
    if truth.is_empty() {
        return Err(HarnessError::UnsupportedReplay("log has no ground-truth records".into()));
    }
    let mut r = MetricsReport { truncated: log.truncated, ..Default::default() };
    r.duration = truth.last().unwrap().t - truth[0].t;
    if log.truncated {
        r.notes.push(format!("log is truncated; report covers t <= {:.3} s", truth.last().unwrap().t));
    }

    let mut bins: Vec<(f64, f64, usize)> = Vec::new();
    for e in log.estimates() {
        let Some(s) = truth_at(&truth, e.timestamp) else { continue };
        let err = (e.p_x - s.body.x).hypot(e.p_y - s.body.y);
        r.errors.push((e.timestamp, err));
        if let Some(cl) = centerline {
            let arc = cl.project(s.body.x, s.body.y).arc_length;
            let k = (arc / bin_width).floor().max(0.0) as usize;
            if bins.len() <= k {
                bins.resize(k + 1, (0.0, 0.0, 0));
            }
            bins[k].0 += err;
            bins[k].1 = bins[k].1.max(err);
            bins[k].2 += 1;
        }
    }
    r.matched = r.errors.len();
    if r.matched > 0 {
        r.mean_error = Some(r.errors.iter().map(|(_, e)| e).sum::<f64>() / r.matched as f64);
        r.max_error = Some(r.errors.iter().map(|(_, e)| *e).fold(0.0, f64::max));
    } else {
        r.notes.push("no estimates matched ground truth".into());
    }
    r.profile = bins
        .iter()
        .enumerate()
        .filter(|(_, b)| b.2 > 0)
        .map(|(k, b)| ErrorBin {
            arc_length_m: (k as f64 + 0.5) * bin_width,
            mean_error_m: b.0 / b.2 as f64,
            max_error_m: b.1,
            count: b.2,
        })
        .collect();

    r.trace = truth
        .iter()
        .map(|s| TracePoint {
            t: s.t,
            speed: s.body.v_x,
            slip_deg: s.body.v_y.atan2(s.body.v_x.abs()).to_degrees(),
        })
        .collect();
    r.mean_speed = r.trace.iter().map(|p| p.speed).sum::<f64>() / r.trace.len() as f64;
    r.max_speed = r.trace.iter().map(|p| p.speed).fold(0.0, f64::max);
    r.max_slip_deg =
        r.trace.iter().filter(|p| p.speed >= SLIP_MIN_SPEED).map(|p| p.slip_deg.abs()).fold(0.0, f64::max);

    if let Some(map) = map {
        let mut acc = Vec::new();
        for frame in log.frames() {
            if let Some(s) = truth_at(&truth, frame.timestamp) {
                let pose = Pose2D::new(s.body.x, s.body.y, s.body.psi);
                let patch = extract_local_patch(map, &pose, &frame.spec);
                if let Ok(a) = frame_accuracy(frame, &patch) {
                    acc.push(a);
                }
            }
        }
        r.mean_accuracy = (!acc.is_empty()).then(|| acc.iter().sum::<f64>() / acc.len() as f64);
    }

    for e in log.events() {
        match e.kind {
            EventKind::Lap => r.lap_times.push(e.value),
            EventKind::Crash => r.crashes += 1,
            EventKind::Divergence => r.divergences += 1,
            EventKind::Reinitialized => r.reinitializations += 1,
            EventKind::Emergency => r.emergencies += 1,
            EventKind::Failure => {
                r.failures += 1;
                r.notes.push(format!("failure at t = {:.3}: {}", e.t, e.note));
            }
            EventKind::Terminated => {}
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::StateEstimate;
    use crate::harness::runlog::{Event, Record};
    use crate::sim::VehicleState;

    fn truth(t: f64, x: f64, y: f64) -> Record {
        Record::Truth(SimState { t, body: VehicleState { x, y, v_x: 5.0, ..Default::default() }, wheel_speed_front: 5.0 })
    }

    fn est(t: f64, x: f64, y: f64) -> Record {
        Record::Estimate(StateEstimate { timestamp: t, p_x: x, p_y: y, psi: 0.0, v_x: 5.0, v_y: 0.0, position_std: 0.0, ess: 1.0 })
    }

    fn log_with(offset: (f64, f64), shift: (f64, f64)) -> RunLog {
        let mut records = vec![Record::Header { version: 1, scenario_hash: [0; 32], seed: 0 }];
        for k in 0..100 {
            let t = k as f64 * 0.005;
            let (x, y) = (k as f64 * 0.025 + shift.0, shift.1);
            records.push(truth(t, x, y));
            records.push(est(t, x + offset.0, y + offset.1));
        }
        RunLog { records, truncated: false }
    }

    #[test]
    fn exact_estimates_have_zero_error() {
        let r = compute_report(&log_with((0.0, 0.0), (0.0, 0.0)), None, None, 1.0).unwrap();
        assert_eq!(r.matched, 100);
        assert_eq!(r.mean_error, Some(0.0));
        assert_eq!(r.max_error, Some(0.0));
    }

    #[test]
    fn constant_offset_gives_its_length() {
        let r = compute_report(&log_with((0.6, 0.8), (0.0, 0.0)), None, None, 1.0).unwrap();
        assert!((r.mean_error.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn errors_invariant_under_translation() {
        let a = compute_report(&log_with((0.3, -0.2), (0.0, 0.0)), None, None, 1.0).unwrap();
        let b = compute_report(&log_with((0.3, -0.2), (123.0, -45.0)), None, None, 1.0).unwrap();
        assert!((a.mean_error.unwrap() - b.mean_error.unwrap()).abs() < 1e-9);
        assert!((a.max_error.unwrap() - b.max_error.unwrap()).abs() < 1e-9);
    }

    #[test]
    fn lap_times_come_from_events() {
        // Two laps with boundaries at 11.5 s and 22.25 s.
        let mut log = log_with((0.0, 0.0), (0.0, 0.0));
        for (t, v) in [(11.5, 11.5), (22.25, 10.75)] {
            log.records.push(Record::Event(Event { t, kind: EventKind::Lap, value: v, note: String::new() }));
        }
        let r = compute_report(&log, None, None, 1.0).unwrap();
        assert_eq!(r.lap_times, vec![11.5, 10.75]);
    }

    #[test]
    fn profile_bins_follow_arc_length() {
        let cl = Centerline::new((0..=20).map(|k| [k as f64, 0.0]).collect(), false).unwrap();
        let r = compute_report(&log_with((0.0, 0.5), (0.0, 0.0)), Some(&cl), None, 1.0).unwrap();
        // Truth spans x in [0, 2.475]: three one-meter bins.
        assert_eq!(r.profile.len(), 3);
        assert_eq!(r.profile.iter().map(|b| b.count).sum::<usize>(), 100);
        assert!(r.profile.iter().all(|b| (b.mean_error_m - 0.5).abs() < 1e-12));
        assert!(r.profile_csv().starts_with("arc_length_m,mean_error_m,max_error_m\n0.500,"));
    }

    #[test]
    fn no_truth_is_rejected() {
        let log = RunLog { records: vec![Record::Header { version: 1, scenario_hash: [0; 32], seed: 0 }], truncated: false };
        assert!(matches!(compute_report(&log, None, None, 1.0), Err(HarnessError::UnsupportedReplay(_))));
    }
}
