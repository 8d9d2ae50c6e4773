//! SMAP binary raster.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SMAP"
//! 4       4     version (u32 LE, = 1)
//! 8       4     width   (u32 LE)
//! 12      4     height  (u32 LE)
//! 16      4·w·h values  (f32 LE, row-major, top-left origin)
//! ```
//!
//! Maps hold `f64` in memory; encoding rounds each value to `f32`. Decoding and
//! re-encoding a payload reproduces it bit for bit.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::SaliencyMap;

pub const MAGIC: &[u8; 4] = b"SMAP";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

pub fn encode(map: &SaliencyMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * map.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    for v in map.values() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

/// Decodes a complete SMAP payload; trailing bytes are an error.
pub fn decode(bytes: &[u8]) -> Result<SaliencyMap> {
    let (map, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(Error::parse(format!(
            "SMAP: {} trailing bytes after payload",
            bytes.len() - used
        )));
    }
    Ok(map)
}

/// Decodes one SMAP payload from the front of `bytes`, returning the map and
/// the number of bytes consumed.
pub fn decode_prefix(bytes: &[u8]) -> Result<(SaliencyMap, usize)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::parse(format!(
            "SMAP: truncated header ({} of {HEADER_LEN} bytes)",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::parse("SMAP: bad magic"));
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(Error::parse(format!("SMAP: unsupported version {version}")));
    }
    let width = read_u32(bytes, 8) as usize;
    let height = read_u32(bytes, 12) as usize;
    if width == 0 || height == 0 {
        return Err(Error::parse(format!("SMAP: zero dimension {width}x{height}")));
    }
    let payload = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::parse("SMAP: dimensions overflow"))?;
    let end = HEADER_LEN
        .checked_add(payload)
        .ok_or_else(|| Error::parse("SMAP: dimensions overflow"))?;
    if bytes.len() < end {
        return Err(Error::parse(format!(
            "SMAP: truncated payload ({} of {payload} value bytes)",
            bytes.len() - HEADER_LEN
        )));
    }
    let values = bytes[HEADER_LEN..end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let map = SaliencyMap::new(width, height, values).map_err(|e| Error::parse(format!("SMAP: {e}")))?;
    Ok((map, end))
}

pub fn read_file(path: impl AsRef<Path>) -> Result<SaliencyMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write_file(path: impl AsRef<Path>, map: &SaliencyMap) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(map)).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Base64 transport form of an SMAP payload used inside JSON documents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedMap {
    pub w: u32,
    pub h: u32,
    pub data_b64: String,
}

impl EncodedMap {
    pub fn from_map(map: &SaliencyMap) -> Self {
        Self {
            w: map.width() as u32,
            h: map.height() as u32,
            data_b64: STANDARD.encode(encode(map)),
        }
    }

    pub fn decode(&self) -> Result<SaliencyMap> {
        let bytes = STANDARD
            .decode(self.data_b64.as_bytes())
            .map_err(|e| Error::parse(format!("data_b64: {e}")))?;
        let map = decode(&bytes)?;
        if map.dims() != (self.w as usize, self.h as usize) {
            return Err(Error::parse(format!(
                "declared {}x{} but payload is {}x{}",
                self.w,
                self.h,
                map.width(),
                map.height()
            )));
        }
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_built_fixture() {
        let mut bytes = b"SMAP".to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&0.25f32.to_le_bytes());
        bytes.extend_from_slice(&1.5f32.to_le_bytes());
        let map = decode(&bytes).unwrap();
        assert_eq!(map.dims(), (2, 1));
        assert_eq!(map.values(), &[0.25, 1.5]);
        assert_eq!(encode(&map), bytes);
    }

    #[test]
    fn rejects_malformed() {
        let good = encode(&SaliencyMap::filled(3, 2, 0.5).unwrap());
        assert!(decode(&good[..10]).is_err());
        assert!(decode(&good[..good.len() - 1]).is_err());
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(decode(&bad_magic).is_err());
        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(decode(&bad_version).is_err());
        let mut negative = good.clone();
        negative[16..20].copy_from_slice(&(-1.0f32).to_le_bytes());
        assert!(decode(&negative).is_err());
        let mut trailing = good;
        trailing.push(0);
        assert!(decode(&trailing).is_err());
    }

    #[test]
    fn huge_dimensions_do_not_allocate() {
        let mut bytes = b"SMAP".to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode(&bytes).is_err());
    }

    #[test]
    fn encoded_map_checks_declared_dims() {
        let map = SaliencyMap::filled(2, 2, 1.0).unwrap();
        let mut enc = EncodedMap::from_map(&map);
        assert_eq!(enc.decode().unwrap(), map);
        enc.w = 3;
        assert!(enc.decode().is_err());
    }
}
