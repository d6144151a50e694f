//! Binary run log.
//!
//! A log is a sequence of records, each `u32 size | u8 tag | payload` with
//! `size` counting the tag and payload bytes. All numbers are little-endian.
//! The first record is always a header.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::filter::{ImuSample, StateEstimate, WheelSpeedSample};
use crate::mppi::{Control, ControlSequence};
use crate::sensor::{decode_frame, encode_frame, CostmapFrame};
use crate::sim::{SimState, VehicleState};

pub const LOG_FORMAT_VERSION: u32 = 1;

/// Upper bound on one record, guarding against corrupt size fields.
const MAX_RECORD: usize = 64 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum EventKind {
    Lap = 0,
    Crash = 1,
    Divergence = 2,
    Reinitialized = 3,
    Emergency = 4,
    Terminated = 5,
    Failure = 6,
}

impl EventKind {
    fn from_u8(v: u8) -> Option<Self> {
        use EventKind::*;
        Some(match v {
            0 => Lap,
            1 => Crash,
            2 => Divergence,
            3 => Reinitialized,
            4 => Emergency,
            5 => Terminated,
            6 => Failure,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            EventKind::Lap => "lap",
            EventKind::Crash => "crash",
            EventKind::Divergence => "divergence",
            EventKind::Reinitialized => "reinitialized",
            EventKind::Emergency => "emergency",
            EventKind::Terminated => "terminated",
            EventKind::Failure => "failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    /// Kind-specific number, e.g. the lap time for lap events.
    pub value: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Header { version: u32, scenario_hash: [u8; 32], seed: u64 },
    Truth(SimState),
    Imu(ImuSample),
    Wheel(WheelSpeedSample),
    Frame(CostmapFrame),
    Estimate(StateEstimate),
    Control { t: f64, control: Control },
    Plan { t: f64, min_cost: f64, feasible: u32, sequence: ControlSequence },
    Event(Event),
}

impl Record {
    pub fn tag(&self) -> u8 {
        match self {
            Record::Header { .. } => 0,
            Record::Truth(_) => 1,
            Record::Imu(_) => 2,
            Record::Wheel(_) => 3,
            Record::Frame(_) => 4,
            Record::Estimate(_) => 5,
            Record::Control { .. } => 6,
            Record::Plan { .. } => 7,
            Record::Event(_) => 8,
        }
    }

    /// Timestamp for ordering checks; the header has none.
    pub fn time(&self) -> Option<f64> {
        Some(match self {
            Record::Header { .. } => return None,
            Record::Truth(s) => s.t,
            Record::Imu(s) => s.timestamp,
            Record::Wheel(s) => s.timestamp,
            Record::Frame(f) => f.timestamp,
            Record::Estimate(e) => e.timestamp,
            Record::Control { t, .. } | Record::Plan { t, .. } => *t,
            Record::Event(e) => e.t,
        })
    }
}

fn put(out: &mut Vec<u8>, vals: &[f64]) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Appends the framed encoding of `rec` to `out`.
pub fn encode_record(rec: &Record, out: &mut Vec<u8>) -> Result<(), HarnessError> {
    let start = out.len();
    out.extend_from_slice(&[0; 4]);
    out.push(rec.tag());
    match rec {
        Record::Header { version, scenario_hash, seed } => {
            out.extend_from_slice(&version.to_le_bytes());
            out.extend_from_slice(scenario_hash);
            out.extend_from_slice(&seed.to_le_bytes());
        }
        Record::Truth(s) => {
            let b = &s.body;
            put(out, &[s.t, b.x, b.y, b.psi, b.v_x, b.v_y, b.yaw_rate, s.wheel_speed_front]);
        }
        Record::Imu(s) => put(out, &[s.timestamp, s.a_x, s.a_y, s.a_z, s.alpha_x, s.alpha_y, s.alpha_z]),
        Record::Wheel(s) => put(out, &[s.timestamp, s.speed]),
        Record::Frame(f) => encode_frame(f, out).map_err(|e| HarnessError::Runtime(e.to_string()))?,
        Record::Estimate(e) => put(out, &[e.timestamp, e.p_x, e.p_y, e.psi, e.v_x, e.v_y, e.position_std, e.ess]),
        Record::Control { t, control } => put(out, &[*t, control.steering, control.throttle]),
        Record::Plan { t, min_cost, feasible, sequence } => {
            put(out, &[*t, *min_cost]);
            out.extend_from_slice(&feasible.to_le_bytes());
            put(out, &[sequence.dt]);
            out.extend_from_slice(&(sequence.controls.len() as u32).to_le_bytes());
            for c in &sequence.controls {
                put(out, &[c.steering, c.throttle]);
            }
        }
        Record::Event(e) => {
            put(out, &[e.t]);
            out.push(e.kind as u8);
            put(out, &[e.value]);
            out.extend_from_slice(&(e.note.len() as u32).to_le_bytes());
            out.extend_from_slice(e.note.as_bytes());
        }
    }
    let size = (out.len() - start - 4) as u32;
    out[start..start + 4].copy_from_slice(&size.to_le_bytes());
    Ok(())
}

/// Little-endian cursor over one record body.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let s = self.buf.get(self.pos..self.pos + n).ok_or_else(|| "record body too short".to_string())?;
        self.pos += n;
        Ok(s)
    }
    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }
    fn f64s<const N: usize>(&mut self) -> Result<[f64; N], String> {
        let mut out = [0.0; N];
        for v in &mut out {
            *v = self.f64()?;
        }
        Ok(out)
    }
}

/// Decodes one record body (`tag | payload`, without the size prefix).
fn decode_body(body: &[u8]) -> Result<Record, String> {
    let (&tag, payload) = body.split_first().ok_or("empty record")?;
    let mut c = Cursor { buf: payload, pos: 0 };
    let rec = match tag {
        0 => {
            let version = c.u32()?;
            let scenario_hash = c.take(32)?.try_into().unwrap();
            let seed = u64::from_le_bytes(c.take(8)?.try_into().unwrap());
            Record::Header { version, scenario_hash, seed }
        }
        1 => {
            let [t, x, y, psi, v_x, v_y, yaw_rate, wheel] = c.f64s()?;
            Record::Truth(SimState { t, body: VehicleState { x, y, psi, v_x, v_y, yaw_rate }, wheel_speed_front: wheel })
        }
        2 => {
            let [timestamp, a_x, a_y, a_z, alpha_x, alpha_y, alpha_z] = c.f64s()?;
            Record::Imu(ImuSample { timestamp, a_x, a_y, a_z, alpha_x, alpha_y, alpha_z })
        }
        3 => {
            let [timestamp, speed] = c.f64s()?;
            Record::Wheel(WheelSpeedSample { timestamp, speed })
        }
        4 => {
            let frame = decode_frame(payload).map_err(|e| e.to_string())?;
            c.pos = frame.encoded_len();
            Record::Frame(frame)
        }
        5 => {
            let [timestamp, p_x, p_y, psi, v_x, v_y, position_std, ess] = c.f64s()?;
            Record::Estimate(StateEstimate { timestamp, p_x, p_y, psi, v_x, v_y, position_std, ess })
        }
        6 => {
            let [t, steering, throttle] = c.f64s()?;
            Record::Control { t, control: Control { steering, throttle } }
        }
        7 => {
            let [t, min_cost] = c.f64s()?;
            let feasible = c.u32()?;
            let dt = c.f64()?;
            let n = c.u32()? as usize;
            if n > payload.len() / 16 {
                return Err(format!("plan claims {n} controls"));
            }
            let mut controls = Vec::with_capacity(n);
            for _ in 0..n {
                let [steering, throttle] = c.f64s()?;
                controls.push(Control { steering, throttle });
            }
            Record::Plan { t, min_cost, feasible, sequence: ControlSequence { dt, controls } }
        }
        8 => {
            let t = c.f64()?;
            let kind = c.u8()?;
            let kind = EventKind::from_u8(kind).ok_or_else(|| format!("unknown event kind {kind}"))?;
            let value = c.f64()?;
            let n = c.u32()? as usize;
            let note = String::from_utf8(c.take(n)?.to_vec()).map_err(|_| "event note is not UTF-8".to_string())?;
            Record::Event(Event { t, kind, value, note })
        }
        other => return Err(format!("unknown record tag {other}")),
    };
    if c.pos != payload.len() {
        return Err(format!("{} trailing bytes in record", payload.len() - c.pos));
    }
    Ok(rec)
}

/// Parsed log contents.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub records: Vec<Record>,
    /// The byte stream ended inside a record; everything before it is kept.
    pub truncated: bool,
}

impl RunLog {
    pub fn header(&self) -> Option<(u32, [u8; 32], u64)> {
        match self.records.first() {
            Some(Record::Header { version, scenario_hash, seed }) => Some((*version, *scenario_hash, *seed)),
            _ => None,
        }
    }

    pub fn truth(&self) -> impl Iterator<Item = &SimState> {
        self.records.iter().filter_map(|r| if let Record::Truth(s) = r { Some(s) } else { None })
    }
    pub fn imu(&self) -> impl Iterator<Item = &ImuSample> {
        self.records.iter().filter_map(|r| if let Record::Imu(s) = r { Some(s) } else { None })
    }
    pub fn wheel(&self) -> impl Iterator<Item = &WheelSpeedSample> {
        self.records.iter().filter_map(|r| if let Record::Wheel(s) = r { Some(s) } else { None })
    }
    pub fn frames(&self) -> impl Iterator<Item = &CostmapFrame> {
        self.records.iter().filter_map(|r| if let Record::Frame(f) = r { Some(f) } else { None })
    }
    pub fn estimates(&self) -> impl Iterator<Item = &StateEstimate> {
        self.records.iter().filter_map(|r| if let Record::Estimate(e) = r { Some(e) } else { None })
    }
    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.records.iter().filter_map(|r| if let Record::Event(e) = r { Some(e) } else { None })
    }

    /// Encodes every record.
    pub fn to_bytes(&self) -> Result<Vec<u8>, HarnessError> {
        let mut out = Vec::new();
        for r in &self.records {
            encode_record(r, &mut out)?;
        }
        Ok(out)
    }

    /// Parses a byte stream. A stream ending mid-record yields the records
    /// before it with `truncated` set; malformed records are errors carrying
    /// the record's byte offset.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HarnessError> {
        let mut records = Vec::new();
        let mut pos = 0;
        let mut truncated = false;
        while pos < bytes.len() {
            let Some(size) = bytes.get(pos..pos + 4) else {
                truncated = true;
                break;
            };
            let size = u32::from_le_bytes(size.try_into().unwrap()) as usize;
            if size == 0 || size > MAX_RECORD {
                return Err(HarnessError::Parse { offset: pos as u64, message: format!("bad record size {size}") });
            }
            let Some(body) = bytes.get(pos + 4..pos + 4 + size) else {
                truncated = true;
                break;
            };
            let rec = decode_body(body).map_err(|message| HarnessError::Parse { offset: pos as u64, message })?;
            if records.is_empty() && !matches!(rec, Record::Header { .. }) {
                return Err(HarnessError::Parse { offset: 0, message: "log does not start with a header".into() });
            }
            records.push(rec);
            pos += 4 + size;
        }
        if records.is_empty() && !truncated {
            return Err(HarnessError::Parse { offset: 0, message: "empty log".into() });
        }
        Ok(Self { records, truncated })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path).map_err(|e| HarnessError::io(path, e))?)
            .read_to_end(&mut bytes)
            .map_err(|e| HarnessError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| HarnessError::io(path, e))
    }

    /// One human-readable line per record.
    pub fn export_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            match r {
                Record::Header { version, scenario_hash, seed } => {
                    writeln!(w, "header version={version} scenario={} seed={seed}", hex::encode(scenario_hash))?
                }
                Record::Truth(s) => {
                    let b = &s.body;
                    writeln!(
                        w,
                        "truth t={:.3} x={:.4} y={:.4} psi={:.4} vx={:.4} vy={:.4} r={:.4} wheel={:.4}",
                        s.t, b.x, b.y, b.psi, b.v_x, b.v_y, b.yaw_rate, s.wheel_speed_front
                    )?
                }
                Record::Imu(s) => writeln!(
                    w,
                    "imu t={:.3} ax={:.4} ay={:.4} az={:.4} gx={:.4} gy={:.4} gz={:.4}",
                    s.timestamp, s.a_x, s.a_y, s.a_z, s.alpha_x, s.alpha_y, s.alpha_z
                )?,
                Record::Wheel(s) => writeln!(w, "wheel t={:.3} speed={:.4}", s.timestamp, s.speed)?,
                Record::Frame(f) => {
                    let mean = f.values.iter().map(|v| *v as f64).sum::<f64>() / f.values.len() as f64;
                    writeln!(w, "frame t={:.3} size={}x{} mean={:.4}", f.timestamp, f.width(), f.height(), mean)?
                }
                Record::Estimate(e) => writeln!(
                    w,
                    "estimate t={:.3} x={:.4} y={:.4} psi={:.4} vx={:.4} vy={:.4} std={:.4} ess={:.1}",
                    e.timestamp, e.p_x, e.p_y, e.psi, e.v_x, e.v_y, e.position_std, e.ess
                )?,
                Record::Control { t, control } => {
                    writeln!(w, "control t={t:.3} steering={:.4} throttle={:.4}", control.steering, control.throttle)?
                }
                Record::Plan { t, min_cost, feasible, sequence } => writeln!(
                    w,
                    "plan t={t:.3} min_cost={min_cost:.4} feasible={feasible} horizon={}",
                    sequence.controls.len()
                )?,
                Record::Event(e) => {
                    writeln!(w, "event t={:.3} kind={} value={:.4} note={:?}", e.t, e.kind.name(), e.value, e.note)?
                }
            }
        }
        if self.truncated {
            writeln!(w, "# truncated")?;
        }
        Ok(())
    }
}

/// Consumer of records as they are produced.
pub trait RecordSink {
    fn record(&mut self, rec: &Record) -> Result<(), HarnessError>;

    fn finish(&mut self) -> Result<(), HarnessError> {
        Ok(())
    }
}

impl RecordSink for RunLog {
    fn record(&mut self, rec: &Record) -> Result<(), HarnessError> {
        self.records.push(rec.clone());
        Ok(())
    }
}

/// Streams encoded records to a file.
pub struct FileSink {
    path: std::path::PathBuf,
    out: BufWriter<File>,
    buf: Vec<u8>,
}

impl FileSink {
    pub fn create(path: &Path) -> Result<Self, HarnessError> {
        let f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
        Ok(Self { path: path.to_path_buf(), out: BufWriter::new(f), buf: Vec::new() })
    }
}

impl RecordSink for FileSink {
    fn record(&mut self, rec: &Record) -> Result<(), HarnessError> {
        self.buf.clear();
        encode_record(rec, &mut self.buf)?;
        self.out.write_all(&self.buf).map_err(|e| HarnessError::io(&self.path, e))
    }

    fn finish(&mut self) -> Result<(), HarnessError> {
        self.out.flush().map_err(|e| HarnessError::io(&self.path, e))
    }
}

/// SHA-256 of the encoded stream, without keeping it.
#[derive(Default)]
pub struct HashSink {
    hasher: Sha256,
    buf: Vec<u8>,
    pub records: u64,
}

impl HashSink {
    pub fn digest(&self) -> [u8; 32] {
        self.hasher.clone().finalize().into()
    }
}

impl RecordSink for HashSink {
    fn record(&mut self, rec: &Record) -> Result<(), HarnessError> {
        self.buf.clear();
        encode_record(rec, &mut self.buf)?;
        self.hasher.update(&self.buf);
        self.records += 1;
        Ok(())
    }
}

/// Forwards every record to two sinks.
pub struct Tee<'a>(pub &'a mut dyn RecordSink, pub &'a mut dyn RecordSink);

impl RecordSink for Tee<'_> {
    fn record(&mut self, rec: &Record) -> Result<(), HarnessError> {
        self.0.record(rec)?;
        self.1.record(rec)
    }

    fn finish(&mut self) -> Result<(), HarnessError> {
        self.0.finish()?;
        self.1.finish()
    }
}

/// SHA-256 of a complete encoded log.
pub fn log_digest(log: &RunLog) -> Result<[u8; 32], HarnessError> {
    Ok(Sha256::digest(log.to_bytes()?).into())
}
