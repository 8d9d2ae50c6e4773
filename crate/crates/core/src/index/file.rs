//! `GFIX` index container.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "GFIX"
//! 4       4     u32 version (1)
//! 8       4     u32 header length H
//! 12      H     UTF-8 JSON header (IndexHeader)
//! 12+H    4·N·D little-endian f32 embeddings, record-major
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::smap::read_u32;

pub const MAGIC: &[u8; 4] = b"GFIX";
pub const VERSION: u32 = 1;
pub const INDEX_FILE: &str = "index.gfix";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct HeaderRecord {
    pub id: u64,
    pub prompt: String,
    pub map_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct IndexHeader {
    pub embedder_id: String,
    pub dimension: usize,
    pub records: Vec<HeaderRecord>,
}

pub fn encode(header: &IndexHeader, embeddings: &[Vec<f32>]) -> Result<Vec<u8>> {
    check(header, embeddings.len())?;
    if embeddings.iter().any(|e| e.len() != header.dimension) {
        return Err(Error::InvalidArguments("embedding length differs from index dimension".into()));
    }
    let json = serde_json::to_vec(header)?;
    let json_len = u32::try_from(json.len()).map_err(|_| Error::InvalidArguments("index header too large".into()))?;
    let mut out = Vec::with_capacity(12 + json.len() + 4 * header.dimension * embeddings.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&json_len.to_le_bytes());
    out.extend_from_slice(&json);
    for v in embeddings.iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(IndexHeader, Vec<Vec<f32>>)> {
    if bytes.len() < 12 {
        return Err(Error::parse(format!("index file truncated: {} bytes", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::parse("bad index magic"));
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(Error::parse(format!("unsupported index version {version}")));
    }
    let json_len = read_u32(bytes, 8) as usize;
    let json_end = 12usize
        .checked_add(json_len)
        .filter(|end| *end <= bytes.len())
        .ok_or_else(|| Error::parse("index header runs past end of file"))?;
    let header: IndexHeader =
        serde_json::from_slice(&bytes[12..json_end]).map_err(|e| Error::parse(format!("index header: {e}")))?;
    let n = header.records.len();
    check(&header, n)?;
    let block = n
        .checked_mul(header.dimension)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::parse("embedding block size overflows"))?;
    if bytes.len() - json_end != block {
        return Err(Error::parse(format!(
            "embedding block is {} bytes, expected {block}",
            bytes.len() - json_end
        )));
    }
    let embeddings = bytes[json_end..]
        .chunks_exact(4 * header.dimension.max(1))
        .map(|row| {
            row.chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect::<Vec<f32>>()
        })
        .collect::<Vec<_>>();
    if embeddings.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::parse("non-finite embedding value"));
    }
    Ok((header, embeddings))
}

fn check(header: &IndexHeader, count: usize) -> Result<()> {
    if header.dimension == 0 {
        return Err(Error::parse("index dimension must be > 0"));
    }
    if header.records.len() != count {
        return Err(Error::parse("record count differs from embedding count"));
    }
    let mut ids: Vec<u64> = header.records.iter().map(|r| r.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::parse("duplicate record id"));
    }
    for r in &header.records {
        let p = std::path::Path::new(&r.map_path);
        let escapes = p.is_absolute() || p.components().any(|c| !matches!(c, std::path::Component::Normal(_)));
        if escapes || r.map_path.is_empty() {
            return Err(Error::parse(format!("map path {:?} is not under the index root", r.map_path)));
        }
    }
    Ok(())
}
