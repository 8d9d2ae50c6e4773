//! On-disk and on-wire encodings.

pub mod png;
pub mod smap;
pub mod sseq;

use std::path::Path;

use crate::error::{Error, Result};
use crate::map::SaliencyMap;

/// Decodes a map from SMAP or PNG bytes, chosen by signature.
pub fn decode_map(bytes: &[u8]) -> Result<SaliencyMap> {
    if bytes.starts_with(smap::MAGIC) {
        smap::decode(bytes)
    } else if bytes.starts_with(png::PNG_SIGNATURE) {
        png::decode(bytes)
    } else {
        Err(Error::parse("unrecognized map format (expected SMAP or PNG)"))
    }
}

pub fn read_map(path: impl AsRef<Path>) -> Result<SaliencyMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_map(&bytes)
}
