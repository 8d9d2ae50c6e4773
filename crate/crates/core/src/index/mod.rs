//! Prompt/saliency guidance index: records, exact nearest-prompt scan, and
//! on-disk persistence.

pub mod file;
mod ingest;

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

pub use ingest::{ingest, IngestFailure, IngestReport, ManifestEntry};

use crate::error::{Error, Result};
use crate::formats::smap;
use crate::map::SaliencyMap;
use crate::optimizer::embed::TextEmbedder;
use file::{HeaderRecord, IndexHeader};

const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceRecord {
    pub id: u64,
    pub prompt: String,
    pub embedding: Vec<f32>,
    /// Relative to the index root.
    pub map_path: String,
}

/// An immutable collection of guidance records. Maps load lazily from the
/// index root, or live in memory for indexes built without a root.
#[derive(Debug, Clone)]
pub struct GuidanceIndex {
    embedder_id: String,
    dimension: usize,
    records: Vec<GuidanceRecord>,
    root: Option<PathBuf>,
    maps: Vec<OnceLock<SaliencyMap>>,
}

impl PartialEq for GuidanceIndex {
    fn eq(&self, other: &Self) -> bool {
        self.embedder_id == other.embedder_id && self.dimension == other.dimension && self.records == other.records
    }
}

/// Squared L2 distance accumulated in f64.
pub fn distance_sq(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum()
}

impl GuidanceIndex {
    fn from_parts(
        embedder_id: String,
        dimension: usize,
        records: Vec<GuidanceRecord>,
        root: Option<PathBuf>,
        maps: Vec<OnceLock<SaliencyMap>>,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::IndexMismatch("index dimension must be > 0".into()));
        }
        for r in &records {
            if r.embedding.len() != dimension {
                return Err(Error::IndexMismatch(format!(
                    "record {} has dimension {}, index has {dimension}",
                    r.id,
                    r.embedding.len()
                )));
            }
            let norm = distance_sq(&r.embedding, &vec![0.0; dimension]).sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::IndexMismatch(format!("record {} embedding norm is {norm}", r.id)));
            }
        }
        let mut ids: Vec<u64> = records.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::IndexMismatch("duplicate record id".into()));
        }
        Ok(Self {
            embedder_id,
            dimension,
            records,
            root,
            maps,
        })
    }

    /// Builds an in-memory index. Map paths are assigned as they would be on disk.
    pub fn in_memory(embedder_id: impl Into<String>, entries: Vec<(u64, String, Vec<f32>, SaliencyMap)>) -> Result<Self> {
        let dimension = entries.first().map(|e| e.2.len()).unwrap_or(1);
        let mut records = Vec::with_capacity(entries.len());
        let mut maps = Vec::with_capacity(entries.len());
        for (id, prompt, embedding, map) in entries {
            records.push(GuidanceRecord {
                id,
                prompt,
                embedding,
                map_path: map_path_for(id),
            });
            maps.push(OnceLock::from(map));
        }
        Self::from_parts(embedder_id.into(), dimension, records, None, maps)
    }

    /// Embeds each prompt and numbers records from 0 in the given order.
    pub fn from_pairs(embedder: &dyn TextEmbedder, pairs: Vec<(String, SaliencyMap)>) -> Result<Self> {
        let entries = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (prompt, map))| Ok((i as u64, prompt.clone(), embedder.embed(&prompt)?, map)))
            .collect::<Result<Vec<_>>>()?;
        let mut index = Self::in_memory(embedder.id(), entries)?;
        index.dimension = embedder.dimension();
        Ok(index)
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn records(&self) -> &[GuidanceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn record(&self, id: u64) -> Option<&GuidanceRecord> {
        self.position(id).map(|i| &self.records[i])
    }

    fn position(&self, id: u64) -> Option<usize> {
        self.records.iter().position(|r| r.id == id)
    }

    /// The saliency map of record `id`, loaded from disk on first use.
    pub fn map(&self, id: u64) -> Result<SaliencyMap> {
        let i = self
            .position(id)
            .ok_or_else(|| Error::InvalidArguments(format!("no record with id {id}")))?;
        if let Some(map) = self.maps[i].get() {
            return Ok(map.clone());
        }
        let root = self
            .root
            .as_ref()
            .ok_or_else(|| Error::InvalidArguments(format!("record {id} has no map")))?;
        let map = smap::read_file(root.join(&self.records[i].map_path))?;
        Ok(self.maps[i].get_or_init(|| map).clone())
    }

    /// All record ids ranked by ascending L2 distance to `query`, ties by id.
    pub fn scan(&self, query: &[f32]) -> Result<Vec<(u64, f64)>> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if query.len() != self.dimension {
            return Err(Error::IndexMismatch(format!(
                "query dimension {} but index dimension {}",
                query.len(),
                self.dimension
            )));
        }
        let mut ranked: Vec<(u64, f64)> = self
            .records
            .iter()
            .map(|r| (r.id, distance_sq(&r.embedding, query).sqrt()))
            .collect();
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        Ok(ranked)
    }

    /// Like [`scan`](Self::scan), but first checks that `embedder` built this index.
    pub fn scan_prompt(&self, prompt: &str, embedder: &dyn TextEmbedder) -> Result<Vec<(u64, f64)>> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if embedder.id() != self.embedder_id {
            return Err(Error::IndexMismatch(format!(
                "index built with {}, query embedder is {}",
                self.embedder_id,
                embedder.id()
            )));
        }
        self.scan(&embedder.embed(prompt)?)
    }

    /// Writes `index.gfix` and every in-memory map under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        for (r, slot) in self.records.iter().zip(&self.maps) {
            let path = dir.join(&r.map_path);
            if let Some(map) = slot.get() {
                if let Some(parent) = path.parent() {
                    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
                smap::write_file(&path, map)?;
            } else if self.root.as_deref() != Some(dir) {
                let map = self.map(r.id)?;
                if let Some(parent) = path.parent() {
                    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
                smap::write_file(&path, &map)?;
            }
        }
        let path = dir.join(file::INDEX_FILE);
        write_atomic(&path, &self.encode()?)?;
        Ok(path)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let header = IndexHeader {
            embedder_id: self.embedder_id.clone(),
            dimension: self.dimension,
            records: self
                .records
                .iter()
                .map(|r| HeaderRecord {
                    id: r.id,
                    prompt: r.prompt.clone(),
                    map_path: r.map_path.clone(),
                })
                .collect(),
        };
        let embeddings: Vec<Vec<f32>> = self.records.iter().map(|r| r.embedding.clone()).collect();
        file::encode(&header, &embeddings)
    }

    /// Decodes an index whose maps resolve under `root`.
    pub fn decode(bytes: &[u8], root: Option<PathBuf>) -> Result<Self> {
        let (header, embeddings) = file::decode(bytes)?;
        let records: Vec<GuidanceRecord> = header
            .records
            .into_iter()
            .zip(embeddings)
            .map(|(r, embedding)| GuidanceRecord {
                id: r.id,
                prompt: r.prompt,
                embedding,
                map_path: r.map_path,
            })
            .collect();
        let maps = records.iter().map(|_| OnceLock::new()).collect();
        Self::from_parts(header.embedder_id, header.dimension, records, root, maps)
    }
}

/// Loads an index from its directory or from the `index.gfix` file itself.
pub fn load_index(path: impl AsRef<Path>) -> Result<GuidanceIndex> {
    let path = path.as_ref();
    let file = if path.is_dir() { path.join(file::INDEX_FILE) } else { path.to_path_buf() };
    let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
    let bytes = std::fs::read(&file).map_err(|e| Error::io(&file, e))?;
    GuidanceIndex::decode(&bytes, Some(root))
}

/// Ranked `(id, distance)` pairs for `query`; see [`GuidanceIndex::scan`].
pub fn scan(index: &GuidanceIndex, query: &[f32]) -> Result<Vec<(u64, f64)>> {
    index.scan(query)
}

pub(crate) fn map_path_for(id: u64) -> String {
    format!("maps/{id:08}.smap")
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::embed::{normalize_embedding, HashedEmbedder};

    fn unit(v: &[f64]) -> Vec<f32> {
        normalize_embedding(v).unwrap()
    }

    fn toy() -> GuidanceIndex {
        let m = SaliencyMap::filled(2, 2, 1.0).unwrap();
        GuidanceIndex::in_memory(
            "toy/v1",
            vec![
                (0, "a".into(), unit(&[1.0, 0.0, 0.0]), m.clone()),
                (1, "b".into(), unit(&[0.0, 1.0, 0.0]), m.clone()),
                (2, "c".into(), unit(&[0.0, 1.0, 0.0]), m),
            ],
        )
        .unwrap()
    }

    #[test]
    fn self_query_ranks_first() {
        let idx = toy();
        let ranked = idx.scan(&idx.records()[0].embedding).unwrap();
        assert_eq!(ranked[0], (0, 0.0));
    }

    #[test]
    fn ties_break_by_id() {
        let idx = toy();
        let ranked = idx.scan(&unit(&[0.0, 1.0, 0.0])).unwrap();
        assert_eq!(ranked.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 2, 0]);
        assert_eq!(ranked[0].1, ranked[1].1);
    }

    #[test]
    fn errors() {
        assert!(matches!(toy().scan(&[1.0, 0.0]), Err(Error::IndexMismatch(_))));
        let empty = GuidanceIndex::in_memory("toy/v1", vec![]).unwrap();
        assert!(matches!(empty.scan(&[1.0]), Err(Error::EmptyDataset)));
        let e = HashedEmbedder::new(3);
        assert!(matches!(toy().scan_prompt("a", &e), Err(Error::IndexMismatch(_))));
        let m = SaliencyMap::filled(1, 1, 1.0).unwrap();
        assert!(GuidanceIndex::in_memory("x", vec![(0, "a".into(), vec![0.5, 0.5], m)]).is_err());
    }

    #[test]
    fn write_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let idx = toy();
        idx.write(dir.path()).unwrap();
        let back = load_index(dir.path()).unwrap();
        assert_eq!(back, idx);
        assert_eq!(back.map(2).unwrap(), idx.map(2).unwrap());
        assert!(back.map(9).is_err());
    }
}
