//! SSEQ container for saliency sequences.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SSEQ"
//! 4       4     version     (u32 LE, = 1)
//! 8       4     frame count (u32 LE, >= 1)
//! 12      4     fps         (f32 LE, finite, > 0)
//! 16      ...   frame count complete SMAP payloads, back to back
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::formats::smap;
use crate::video::SaliencySequence;

pub const MAGIC: &[u8; 4] = b"SSEQ";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn encode(seq: &SaliencySequence) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
    out.extend_from_slice(&(seq.fps() as f32).to_le_bytes());
    for frame in seq.frames() {
        out.extend_from_slice(&smap::encode(frame));
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<SaliencySequence> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::parse(format!(
            "SSEQ: truncated header ({} of {HEADER_LEN} bytes)",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::parse("SSEQ: bad magic"));
    }
    let version = smap::read_u32(bytes, 4);
    if version != VERSION {
        return Err(Error::parse(format!("SSEQ: unsupported version {version}")));
    }
    let count = smap::read_u32(bytes, 8) as usize;
    if count == 0 {
        return Err(Error::parse("SSEQ: zero frames"));
    }
    let fps = f32::from_le_bytes([bytes[12], bytes[13], bytes[14], bytes[15]]) as f64;
    // Each frame needs at least a header plus one value.
    if count > (bytes.len() - HEADER_LEN) / (smap::HEADER_LEN + 4) {
        return Err(Error::parse(format!(
            "SSEQ: truncated at frame {} (header declares {count} frames)",
            (bytes.len() - HEADER_LEN) / (smap::HEADER_LEN + 4)
        )));
    }
    let mut frames = Vec::with_capacity(count);
    let mut offset = HEADER_LEN;
    for index in 0..count {
        let (frame, used) = smap::decode_prefix(&bytes[offset..])
            .map_err(|e| Error::parse(format!("SSEQ: frame {index}: {e}")))?;
        frames.push(frame);
        offset += used;
    }
    if offset != bytes.len() {
        return Err(Error::parse(format!(
            "SSEQ: {} trailing bytes after frame {}",
            bytes.len() - offset,
            count - 1
        )));
    }
    SaliencySequence::new(frames, fps).map_err(|e| Error::parse(format!("SSEQ: {e}")))
}

pub fn read_file(path: impl AsRef<Path>) -> Result<SaliencySequence> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write_file(path: impl AsRef<Path>, seq: &SaliencySequence) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(seq)).map_err(|e| Error::io(path, e))
}
