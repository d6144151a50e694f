//! `CMAP` record layout (little-endian):
//!
//! ```text
//! magic "CMAP" | version u32 | timestamp f64 | width u16 | height u16 |
//! resolution f32 | width*height f32 values, row-major
//! ```
//!
//! On a byte stream each record is preceded by its total size as a `u32`.

use std::io::{ErrorKind, Read, Write};

use super::SensorError;
use crate::map::PatchSpec;

pub const FRAME_MAGIC: [u8; 4] = *b"CMAP";
pub const FRAME_FORMAT_VERSION: u32 = 1;
const FRAME_HEADER_LEN: usize = 24;
/// Refuse absurd length prefixes instead of allocating them.
const MAX_RECORD_LEN: usize = FRAME_HEADER_LEN + 4 * 4096 * 4096;

/// Egocentric cost observation.
#[derive(Debug, Clone, PartialEq)]
pub struct CostmapFrame {
    pub timestamp: f64,
    pub spec: PatchSpec,
    pub values: Vec<f32>,
}

impl CostmapFrame {
    pub fn new(timestamp: f64, spec: PatchSpec, values: Vec<f32>) -> Result<Self, SensorError> {
        if !spec.is_valid() {
            return Err(SensorError::InvalidInput(format!("invalid frame spec {spec:?}")));
        }
        if values.len() != spec.len() {
            return Err(SensorError::InvalidInput(format!(
                "frame has {} values, spec needs {}",
                values.len(),
                spec.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SensorError::InvalidInput(format!("frame value {v} outside [0, 1]")));
        }
        if !timestamp.is_finite() {
            return Err(SensorError::InvalidInput("non-finite frame timestamp".into()));
        }
        Ok(Self { timestamp, spec, values })
    }

    /// A frame filled with one value.
    pub fn constant(timestamp: f64, spec: PatchSpec, value: f32) -> Self {
        Self { timestamp, spec, values: vec![value.clamp(0.0, 1.0); spec.len()] }
    }

    pub fn width(&self) -> usize {
        self.spec.width_px as usize
    }

    pub fn height(&self) -> usize {
        self.spec.height_px as usize
    }

    pub fn encoded_len(&self) -> usize {
        FRAME_HEADER_LEN + 4 * self.values.len()
    }
}

/// Serializes a frame body (without the stream length prefix).
pub fn encode_frame(frame: &CostmapFrame, out: &mut Vec<u8>) -> Result<(), SensorError> {
    let w = u16::try_from(frame.spec.width_px)
        .map_err(|_| SensorError::InvalidInput(format!("width {} exceeds u16", frame.spec.width_px)))?;
    let h = u16::try_from(frame.spec.height_px)
        .map_err(|_| SensorError::InvalidInput(format!("height {} exceeds u16", frame.spec.height_px)))?;
    out.reserve(frame.encoded_len());
    out.extend_from_slice(&FRAME_MAGIC);
    out.extend_from_slice(&FRAME_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&frame.timestamp.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&(frame.spec.resolution as f32).to_le_bytes());
    for v in &frame.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

/// Parses one frame body. The longitudinal offset is not carried on the wire
/// and is always zero (the vehicle sits on the bottom edge).
pub fn decode_frame(bytes: &[u8]) -> Result<CostmapFrame, SensorError> {
    if bytes.len() < FRAME_HEADER_LEN {
        return Err(SensorError::Protocol(format!("frame record too short ({} bytes)", bytes.len())));
    }
    if bytes[..4] != FRAME_MAGIC {
        return Err(SensorError::Protocol(format!("bad frame magic {:?}", &bytes[..4])));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FRAME_FORMAT_VERSION {
        return Err(SensorError::Protocol(format!("unsupported frame version {version}")));
    }
    let timestamp = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let width = u16::from_le_bytes(bytes[16..18].try_into().unwrap());
    let height = u16::from_le_bytes(bytes[18..20].try_into().unwrap());
    let resolution = f32::from_le_bytes(bytes[20..24].try_into().unwrap());
    let n = width as usize * height as usize;
    let payload = &bytes[FRAME_HEADER_LEN..];
    if payload.len() != 4 * n {
        return Err(SensorError::Protocol(format!(
            "frame {width}x{height} needs {} payload bytes, record has {}",
            4 * n,
            payload.len()
        )));
    }
    let values = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let spec = PatchSpec {
        width_px: width as u32,
        height_px: height as u32,
        resolution: resolution as f64,
        longitudinal_offset: 0.0,
    };
    CostmapFrame::new(timestamp, spec, values).map_err(|e| SensorError::Protocol(e.to_string()))
}

/// Writes one length-prefixed frame record.
pub fn write_framed<W: Write>(mut w: W, frame: &CostmapFrame) -> Result<(), SensorError> {
    let mut buf = Vec::with_capacity(4 + frame.encoded_len());
    buf.extend_from_slice(&(frame.encoded_len() as u32).to_le_bytes());
    encode_frame(frame, &mut buf)?;
    w.write_all(&buf)?;
    Ok(())
}

/// Reads one length-prefixed frame record. Returns `Ok(None)` on a clean end
/// of stream at a record boundary.
pub fn read_framed<R: Read>(mut r: R) -> Result<Option<CostmapFrame>, SensorError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(len) as usize;
    if !(FRAME_HEADER_LEN..=MAX_RECORD_LEN).contains(&len) {
        return Err(SensorError::Protocol(format!("implausible frame record length {len}")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => SensorError::Protocol("stream ended inside a frame record".into()),
        _ => e.into(),
    })?;
    decode_frame(&body).map(Some)
}
