//! Binary map file: a 32-byte little-endian header followed by the cost grid.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "SMAP"
//!      4     4  version (u32)
//!      8     4  width_px (u32)
//!     12     4  height_px (u32)
//!     16     4  resolution, px/m (f32)
//!     20     4  origin_x, m (f32)
//!     24     4  origin_y, m (f32)
//!     28     4  track_halfwidth, m (f32)
//!     32   4wh  cost values (f32), row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{MapError, SchematicMap};

pub const MAP_MAGIC: [u8; 4] = *b"SMAP";
pub const MAP_FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 32;

pub fn write_map<W: Write>(map: &SchematicMap, mut w: W) -> Result<(), MapError> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * map.cost().len());
    buf.extend_from_slice(&MAP_MAGIC);
    buf.extend_from_slice(&MAP_FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(map.width() as u32).to_le_bytes());
    buf.extend_from_slice(&(map.height() as u32).to_le_bytes());
    buf.extend_from_slice(&map.resolution.to_le_bytes());
    buf.extend_from_slice(&map.origin[0].to_le_bytes());
    buf.extend_from_slice(&map.origin[1].to_le_bytes());
    buf.extend_from_slice(&map.track_halfwidth.to_le_bytes());
    for c in map.cost() {
        buf.extend_from_slice(&c.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_map<R: Read>(mut r: R) -> Result<SchematicMap, MapError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn save_map(map: &SchematicMap, path: impl AsRef<Path>) -> Result<(), MapError> {
    let file = std::fs::File::create(path)?;
    write_map(map, std::io::BufWriter::new(file))
}

pub fn load_map(path: impl AsRef<Path>) -> Result<SchematicMap, MapError> {
    decode(&std::fs::read(path)?)
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn f32_at(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn decode(bytes: &[u8]) -> Result<SchematicMap, MapError> {
    if bytes.len() < HEADER_LEN {
        return Err(MapError::Format(format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len())));
    }
    if bytes[..4] != MAP_MAGIC {
        return Err(MapError::Format(format!("bad magic {:?}", &bytes[..4])));
    }
    let version = u32_at(bytes, 4);
    if version != MAP_FORMAT_VERSION {
        return Err(MapError::Format(format!("unsupported map version {version}")));
    }
    let width = u32_at(bytes, 8);
    let height = u32_at(bytes, 12);
    let resolution = f32_at(bytes, 16);
    let origin = [f32_at(bytes, 20), f32_at(bytes, 24)];
    let halfwidth = f32_at(bytes, 28);
    let cells = (width as usize)
        .checked_mul(height as usize)
        .ok_or_else(|| MapError::Format(format!("map dimensions {width}x{height} overflow")))?;
    let expected = cells * 4;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(MapError::Truncated { expected, found: payload.len() });
    }
    if payload.len() > expected {
        return Err(MapError::Format(format!("{} trailing bytes after payload", payload.len() - expected)));
    }
    let cost = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    SchematicMap::from_parts(width, height, resolution, origin, halfwidth, cost)
        .map_err(|e| MapError::Format(e.to_string()))
}
