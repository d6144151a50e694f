//! The closed loop: a 1 kHz plant clock drives IMU, wheel-speed and camera
//! emission, the particle filter and the planner at fixed tick multiples.

use std::sync::Arc;

use rand::SeedableRng;

use super::runlog::{Event, EventKind, Record, RecordSink};
use super::scenario::{DriveMode, PreparedScenario};
use super::HarnessError;
use crate::filter::{FilterEvent, ImuSample, ParticleFilter, StateEstimate};
use crate::geometry::Pose2D;
use crate::map::Centerline;
use crate::mppi::{Control, ControlSequence, CostSource, Mppi};
use crate::rng::{derive_seed, SimRng};
use crate::sensor::{CostmapFrame, FramePoll};
use crate::sim::{emit_imu, emit_wheelspeed, step, BicycleModel, SimState};

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    LapsCompleted,
    Timeout,
    Crash,
    Failure(String),
}

impl Termination {
    pub fn label(&self) -> &str {
        match self {
            Termination::LapsCompleted => "laps completed",
            Termination::Timeout => "timeout",
            Termination::Crash => "crash",
            Termination::Failure(_) => "failure",
        }
    }
}

/// Summary of a closed-loop run; the full record stream goes to the sink.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub termination: Termination,
    pub duration: f64,
    pub lap_times: Vec<f64>,
    pub crashes: usize,
    pub divergences: usize,
    pub emergencies: usize,
}

/// Tracks distance travelled along a closed centerline.
struct LapCounter<'a> {
    centerline: &'a Centerline,
    last_arc: f64,
    progress: f64,
    laps: usize,
    lap_start: f64,
}

impl<'a> LapCounter<'a> {
    fn new(centerline: &'a Centerline, x: f64, y: f64) -> Self {
        let last_arc = centerline.project(x, y).arc_length;
        Self { centerline, last_arc, progress: 0.0, laps: 0, lap_start: 0.0 }
    }

    /// Returns the lap time when a lap completes.
    fn update(&mut self, t: f64, x: f64, y: f64) -> Option<f64> {
        let len = self.centerline.length();
        let arc = self.centerline.project(x, y).arc_length;
        let mut d = arc - self.last_arc;
        if d > 0.5 * len {
            d -= len;
        } else if d < -0.5 * len {
            d += len;
        }
        self.last_arc = arc;
        self.progress += d;
        if self.progress >= (self.laps + 1) as f64 * len {
            self.laps += 1;
            let lap = t - self.lap_start;
            self.lap_start = t;
            Some(lap)
        } else {
            None
        }
    }
}

/// Applies the control for time `t` from a sequence planned at `planned_at`.
fn scheduled(seq: &ControlSequence, planned_at: f64, t: f64) -> Control {
    let k = ((t - planned_at) / seq.dt + 1e-9).floor().max(0.0) as usize;
    seq.controls.get(k).or(seq.controls.last()).copied().unwrap_or_default()
}

fn event(t: f64, kind: EventKind, value: f64, note: impl Into<String>) -> Record {
    Record::Event(Event { t, kind, value, note: note.into() })
}

/// Runs the scenario to termination, streaming every record into `sink`.
///
/// Component failures end the run with a failure event; only sink errors
/// are returned as `Err`.
pub fn run_scenario(prep: &PreparedScenario, sink: &mut dyn RecordSink) -> Result<RunOutput, HarnessError> {
    let sc = &prep.scenario;
    let spec = sc.run;
    let seed = sc.seed;
    let divisor = |rate: f64| (spec.plant_rate / rate).round() as u64;
    let (imu_div, wheel_div, plan_div) = (divisor(spec.imu_rate), divisor(spec.wheel_rate), divisor(spec.plan_rate));
    let dt = 1.0 / spec.plant_rate;
    let max_ticks = (spec.max_duration * spec.plant_rate).round() as u64;

    sink.record(&Record::Header { version: super::runlog::LOG_FORMAT_VERSION, scenario_hash: sc.hash(), seed })?;

    let mut out = RunOutput {
        termination: Termination::Timeout,
        duration: 0.0,
        lap_times: Vec::new(),
        crashes: 0,
        divergences: 0,
        emergencies: 0,
    };
    let fail = |sink: &mut dyn RecordSink, out: &mut RunOutput, t: f64, msg: String| -> Result<(), HarnessError> {
        log::error!("run failed at t = {t:.3}: {msg}");
        sink.record(&event(t, EventKind::Failure, 0.0, msg.clone()))?;
        out.termination = Termination::Failure(msg);
        Ok(())
    };

    let mut sensor = match prep.open_sensor() {
        Ok(s) => s,
        Err(e) => {
            fail(sink, &mut out, 0.0, e.to_string())?;
            return finish(sink, out, 0.0);
        }
    };
    let mut filter = if spec.mode == DriveMode::Mapless {
        None
    } else {
        match ParticleFilter::new(
            Arc::clone(&prep.map),
            sc.filter.clone(),
            &prep.prior(0.0),
            derive_seed(seed, "filter"),
        ) {
            Ok(f) => Some(f),
            Err(e) => {
                fail(sink, &mut out, 0.0, e.to_string())?;
                return finish(sink, out, 0.0);
            }
        }
    };
    let model = BicycleModel { params: sc.vehicle };
    let mut mppi = match Mppi::new(model, sc.mppi, sc.cost, derive_seed(seed, "mppi")) {
        Ok(m) => m,
        Err(e) => {
            fail(sink, &mut out, 0.0, e)?;
            return finish(sink, out, 0.0);
        }
    };
    let mut imu_rng = SimRng::seed_from_u64(derive_seed(seed, "imu"));
    let mut wheel_rng = SimRng::seed_from_u64(derive_seed(seed, "wheel"));

    let start = prep.start;
    let mut state = SimState::default();
    state.body.x = start.p_x;
    state.body.y = start.p_y;
    state.body.psi = start.psi;
    let mut laps = prep.centerline.as_ref().map(|cl| LapCounter::new(cl, start.p_x, start.p_y));

    let mut prev_imu_state = state;
    let mut last_imu: Option<ImuSample> = None;
    let mut estimate: Option<StateEstimate> = filter.as_ref().map(|f| f.estimate(0.0));
    let mut latest_frame: Option<CostmapFrame> = None;
    let mut wheel_speed = 0.0;
    let mut plan_time = 0.0;
    let mut control = Control::default();
    let mut off_track_since: Option<f64> = None;

    let mut tick: u64 = 0;
    loop {
        let t = tick as f64 * dt;
        state.t = t;

        if tick % imu_div == 0 {
            sink.record(&Record::Truth(state))?;
            sensor.observe_truth(t, &Pose2D::new(state.body.x, state.body.y, state.body.psi));
            loop {
                match sensor.next_frame(t) {
                    Ok(FramePoll::Ready(frame)) => {
                        sink.record(&Record::Frame(frame.clone()))?;
                        if let Some(f) = filter.as_mut() {
                            if let Err(e) = f.on_frame(&frame) {
                                fail(sink, &mut out, t, e.to_string())?;
                                return finish(sink, out, t);
                            }
                        }
                        latest_frame = Some(frame);
                    }
                    Ok(FramePoll::Pending | FramePoll::Exhausted) => break,
                    Err(e) => {
                        fail(sink, &mut out, t, e.to_string())?;
                        return finish(sink, out, t);
                    }
                }
            }
            if tick % wheel_div == 0 {
                let w = emit_wheelspeed(&state, &sc.noise, &mut wheel_rng);
                sink.record(&Record::Wheel(w))?;
                wheel_speed = w.speed;
                if let Some(f) = filter.as_mut() {
                    f.on_wheel(w);
                }
            }
            if tick > 0 {
                let imu = emit_imu(&state, &prev_imu_state, &sc.noise, &mut imu_rng);
                sink.record(&Record::Imu(imu))?;
                last_imu = Some(imu);
                if let Some(f) = filter.as_mut() {
                    match f.on_imu(&imu) {
                        Ok(step) => {
                            for e in &step.events {
                                let kind = match e {
                                    FilterEvent::Divergence => {
                                        out.divergences += 1;
                                        EventKind::Divergence
                                    }
                                    FilterEvent::Reinitialized => EventKind::Reinitialized,
                                };
                                sink.record(&event(t, kind, 0.0, ""))?;
                            }
                            sink.record(&Record::Estimate(step.estimate))?;
                            estimate = Some(step.estimate);
                        }
                        Err(e) => {
                            fail(sink, &mut out, t, e.to_string())?;
                            return finish(sink, out, t);
                        }
                    }
                }
            }
            prev_imu_state = state;
        }

        if tick % plan_div == 0 {
            let yaw_rate = last_imu.map_or(0.0, |s| s.alpha_z);
            let plan = match spec.mode {
                DriveMode::Truth => {
                    mppi.advance(t - plan_time);
                    Some(mppi.plan(&state.body, &CostSource::Map(&prep.map)))
                }
                DriveMode::Filter => {
                    let e = estimate.expect("filter mode runs a filter");
                    let s = crate::sim::VehicleState { x: e.p_x, y: e.p_y, psi: e.psi, v_x: e.v_x, v_y: e.v_y, yaw_rate };
                    mppi.advance(t - plan_time);
                    Some(mppi.plan(&s, &CostSource::Map(&prep.map)))
                }
                DriveMode::Mapless => latest_frame.as_ref().map(|frame| {
                    // Plan in the frame's own coordinates: the vehicle sits
                    // at the origin, velocities from wheel speed and gyro.
                    let s = crate::sim::VehicleState {
                        x: 0.0,
                        y: 0.0,
                        psi: 0.0,
                        v_x: wheel_speed,
                        v_y: state.body.v_y,
                        yaw_rate,
                    };
                    mppi.advance(t - plan_time);
                    mppi.plan(&s, &CostSource::Frame { frame, pose: Pose2D::new(0.0, 0.0, 0.0) })
                }),
            };
            if let Some(plan) = plan {
                plan_time = t;
                sink.record(&Record::Plan {
                    t,
                    min_cost: plan.min_cost,
                    feasible: plan.feasible as u32,
                    sequence: plan.sequence.clone(),
                })?;
                if plan.emergency {
                    out.emergencies += 1;
                    sink.record(&event(t, EventKind::Emergency, 0.0, "all rollouts infeasible"))?;
                }
            }
        }
        let u = scheduled(mppi.sequence(), plan_time, t);
        if u != control || tick == 0 {
            control = u;
            sink.record(&Record::Control { t, control })?;
        }

        // Termination checks on the state at `t`.
        if let Some(lc) = laps.as_mut() {
            if let Some(lap) = lc.update(t, state.body.x, state.body.y) {
                log::info!("lap {} in {lap:.2} s", lc.laps);
                out.lap_times.push(lap);
                sink.record(&event(t, EventKind::Lap, lap, format!("lap {}", lc.laps)))?;
                if spec.laps > 0 && lc.laps >= spec.laps as usize {
                    out.termination = Termination::LapsCompleted;
                    return finish(sink, out, t);
                }
            }
        }
        if prep.map.query_cost(state.body.x, state.body.y) >= 1.0 {
            let since = *off_track_since.get_or_insert(t);
            if t - since > spec.crash_time {
                out.crashes += 1;
                sink.record(&event(t, EventKind::Crash, t - since, "off track"))?;
                out.termination = Termination::Crash;
                return finish(sink, out, t);
            }
        } else {
            off_track_since = None;
        }
        if tick >= max_ticks {
            out.termination = Termination::Timeout;
            return finish(sink, out, t);
        }

        state = step(&state, &control, &sc.vehicle, dt);
        if !state.body.is_finite() {
            fail(sink, &mut out, t, "plant state became non-finite".into())?;
            return finish(sink, out, t);
        }
        tick += 1;
    }
}

fn finish(sink: &mut dyn RecordSink, mut out: RunOutput, t: f64) -> Result<RunOutput, HarnessError> {
    out.duration = t;
    let note = match &out.termination {
        Termination::Failure(m) => m.clone(),
        other => other.label().to_string(),
    };
    sink.record(&event(t, EventKind::Terminated, out.lap_times.len() as f64, note))?;
    sink.finish()?;
    Ok(out)
}
