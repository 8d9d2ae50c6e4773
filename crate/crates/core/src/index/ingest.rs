use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{file, map_path_for, write_atomic, GuidanceIndex, GuidanceRecord};
use crate::error::{Error, Result};
use crate::formats::{self, smap};
use crate::map::SaliencyMap;
use crate::optimizer::embed::TextEmbedder;

/// One manifest line: `{"prompt": "...", "map": "relative/or/absolute/path"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub prompt: String,
    pub map: String,
}

impl ManifestEntry {
    pub fn parse(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::parse(format!("manifest line: {e}")))
    }
}

/// Prompt, embedding and map for one manifest line.
type LoadedEntry = (String, Vec<f32>, SaliencyMap);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IngestFailure {
    /// Zero-based manifest line, which is also the id the record would have had.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IngestReport {
    pub index_path: PathBuf,
    pub records: usize,
    pub failures: Vec<IngestFailure>,
}

/// Failures tolerated before the whole ingest is rejected.
fn allowed_failures(total: usize) -> usize {
    (total / 100).max(1)
}

/// Reads a JSON-lines manifest (or `manifest.jsonl` inside a directory),
/// embeds every prompt, and writes max-normalized SMAP copies plus the index
/// file under `out`. Map paths resolve relative to the manifest's directory.
pub fn ingest(manifest: impl AsRef<Path>, embedder: &dyn TextEmbedder, out: impl AsRef<Path>) -> Result<(GuidanceIndex, IngestReport)> {
    let manifest = manifest.as_ref();
    let out = out.as_ref();
    let manifest_file = if manifest.is_dir() { manifest.join("manifest.jsonl") } else { manifest.to_path_buf() };
    let base = manifest_file.parent().map(Path::to_path_buf).unwrap_or_default();
    let text = std::fs::read_to_string(&manifest_file).map_err(|e| Error::io(&manifest_file, e))?;

    let lines: Vec<(u64, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i as u64, l))
        .collect();
    let total = lines.len();

    let loaded: Vec<(u64, Result<LoadedEntry>)> = lines
        .par_iter()
        .map(|&(id, line)| (id, load_entry(line, &base, embedder)))
        .collect();

    let mut failures = Vec::new();
    let mut entries = Vec::new();
    for (id, result) in loaded {
        match result {
            Ok(entry) => entries.push((id, entry)),
            Err(e) => {
                log::warn!("manifest line {id}: {e}");
                failures.push(IngestFailure {
                    line: id,
                    reason: e.to_string(),
                })
            }
        }
    }
    if failures.len() > allowed_failures(total) || entries.is_empty() {
        return Err(Error::IngestFailed {
            failed: failures.len(),
            total,
        });
    }

    let maps_dir = out.join("maps");
    std::fs::create_dir_all(&maps_dir).map_err(|e| Error::io(&maps_dir, e))?;
    let mut records = Vec::with_capacity(entries.len());
    let mut maps = Vec::with_capacity(entries.len());
    for (id, (prompt, embedding, map)) in entries {
        let map_path = map_path_for(id);
        let bytes = smap::encode(&map);
        write_if_changed(&out.join(&map_path), &bytes)?;
        records.push(GuidanceRecord {
            id,
            prompt,
            embedding,
            map_path,
        });
        maps.push(OnceLock::from(map));
    }
    let index = GuidanceIndex::from_parts(embedder.id(), embedder.dimension(), records, Some(out.to_path_buf()), maps)?;
    let index_path = out.join(file::INDEX_FILE);
    write_atomic(&index_path, &index.encode()?)?;
    let report = IngestReport {
        index_path,
        records: index.len(),
        failures,
    };
    Ok((index, report))
}

fn load_entry(line: &str, base: &Path, embedder: &dyn TextEmbedder) -> Result<LoadedEntry> {
    let entry = ManifestEntry::parse(line)?;
    let path = base.join(&entry.map);
    let map = formats::read_map(&path)?.normalize_to_max()?;
    // Stored maps are f32; keep the in-memory copy identical to what a reload sees.
    let map = smap::decode(&smap::encode(&map))?;
    let embedding = embedder.embed(&entry.prompt)?;
    if embedding.len() != embedder.dimension() {
        return Err(Error::Embedding(format!(
            "embedder returned {} values, expected {}",
            embedding.len(),
            embedder.dimension()
        )));
    }
    Ok((entry.prompt, embedding, map))
}

fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<()> {
    if std::fs::read(path).map(|old| old == bytes).unwrap_or(false) {
        return Ok(());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
