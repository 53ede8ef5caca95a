//! Sample records, embedding tables, and their on-disk formats.
//!
//! A manifest is line-delimited JSON, one [`Record`] per line. Embeddings use
//! the FEMB binary layout:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FEMB"
//! 4       4     version (u32 LE, = 1)
//! 8       4     count   (u32 LE)
//! 12      4     dim     (u32 LE)
//! 16      4*count*dim  f32 LE payload, row-major
//! ```
//!
//! with a sidecar text file holding one id per line in row order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEMB_MAGIC: &[u8; 4] = b"FEMB";
pub const FEMB_VERSION: u32 = 1;
const FEMB_HEADER_LEN: usize = 16;

/// One sample of the pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    pub source: String,
    pub age: u32,
    pub features: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl Record {
    pub fn state(&self, feature: &str) -> Option<&str> {
        self.features.get(feature).map(String::as_str)
    }
}

/// Inclusive range of admissible age labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRange {
    pub min: u32,
    pub max: u32,
}

impl Default for LabelRange {
    fn default() -> Self {
        LabelRange { min: 0, max: 100 }
    }
}

impl LabelRange {
    pub fn contains(&self, age: i64) -> bool {
        age >= i64::from(self.min) && age <= i64::from(self.max)
    }
}

// Raw line shape; age is read wide so out-of-range values get a range error
// rather than a type error.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    source: String,
    age: i64,
    features: BTreeMap<String, String>,
    #[serde(default)]
    path: Option<String>,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<Record>> {
    load_manifest_with(path, LabelRange::default())
}

pub fn load_manifest_with(path: impl AsRef<Path>, range: LabelRange) -> Result<Vec<Record>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, range)
}

/// Parses manifest text. Blank lines are skipped but still counted so that
/// reported line numbers match the file.
pub fn parse_manifest(text: &str, range: LabelRange) -> Result<Vec<Record>> {
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut schema: Option<(usize, BTreeSet<String>)> = None;

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if raw.id.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty id".into(),
            });
        }
        if !range.contains(raw.age) {
            return Err(Error::AgeOutOfRange {
                line: line_no,
                age: raw.age,
                min: range.min,
                max: range.max,
            });
        }
        if let Some(&first_line) = seen.get(&raw.id) {
            return Err(Error::DuplicateId {
                id: raw.id,
                first_line,
                second_line: line_no,
            });
        }
        let names: BTreeSet<String> = raw.features.keys().cloned().collect();
        match &schema {
            None => schema = Some((line_no, names)),
            Some((first, expected)) if *expected != names => {
                return Err(Error::Schema {
                    line: line_no,
                    message: format!(
                        "features {:?} differ from {:?} declared on line {first}",
                        names, expected
                    ),
                });
            }
            Some(_) => {}
        }
        if let Some((feature, _)) = raw.features.iter().find(|(_, state)| state.is_empty()) {
            return Err(Error::Schema {
                line: line_no,
                message: format!("feature {feature:?} has an empty state"),
            });
        }
        seen.insert(raw.id.clone(), line_no);
        records.push(Record {
            id: raw.id,
            source: raw.source,
            age: raw.age as u32,
            features: raw.features,
            path: raw.path,
        });
    }
    Ok(records)
}

pub fn manifest_to_string(records: &[Record]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn save_manifest(path: impl AsRef<Path>, records: &[Record]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, manifest_to_string(records)).map_err(|e| Error::io(path, e))
}

/// Concatenates several pools, enforcing id uniqueness and a shared feature
/// schema across all of them.
pub fn merge_pools(pools: Vec<Vec<Record>>) -> Result<Vec<Record>> {
    let mut merged: Vec<Record> = Vec::new();
    let mut ids: BTreeSet<String> = BTreeSet::new();
    for (pool_idx, pool) in pools.into_iter().enumerate() {
        for r in pool {
            if let Some(first) = merged.first() {
                if !first.features.keys().eq(r.features.keys()) {
                    return Err(Error::data(format!(
                        "pool {pool_idx}: record {:?} has a different feature schema",
                        r.id
                    )));
                }
            }
            if !ids.insert(r.id.clone()) {
                return Err(Error::data(format!(
                    "pool {pool_idx}: id {:?} already present in an earlier pool",
                    r.id
                )));
            }
            merged.push(r);
        }
    }
    Ok(merged)
}

/// Feature names of a manifest (taken from its first record).
pub fn feature_names(records: &[Record]) -> Vec<String> {
    records
        .first()
        .map(|r| r.features.keys().cloned().collect())
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub age: u32,
    pub feature: String,
    pub state: String,
}

impl GroupKey {
    pub fn new(age: u32, feature: impl Into<String>, state: impl Into<String>) -> Self {
        GroupKey {
            age,
            feature: feature.into(),
            state: state.into(),
        }
    }
}

/// Cell counts over (age, feature, state), overall and split by source.
/// Iteration order is age, then feature, then state (then source).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroupCounts {
    pub cells: BTreeMap<GroupKey, usize>,
    pub by_source: BTreeMap<(GroupKey, String), usize>,
}

impl GroupCounts {
    pub fn get(&self, key: &GroupKey) -> usize {
        self.cells.get(key).copied().unwrap_or(0)
    }

    pub fn get_source(&self, key: &GroupKey, source: &str) -> usize {
        self.by_source
            .get(&(key.clone(), source.to_string()))
            .copied()
            .unwrap_or(0)
    }

    /// Counts of one feature keyed by (age, state).
    pub fn for_feature(&self, feature: &str) -> BTreeMap<(u32, String), usize> {
        self.cells
            .iter()
            .filter(|(k, _)| k.feature == feature)
            .map(|(k, &n)| ((k.age, k.state.clone()), n))
            .collect()
    }
}

pub fn group_counts(records: &[Record]) -> GroupCounts {
    let mut counts = GroupCounts::default();
    for r in records {
        for (feature, state) in &r.features {
            let key = GroupKey::new(r.age, feature.clone(), state.clone());
            *counts
                .by_source
                .entry((key.clone(), r.source.clone()))
                .or_insert(0) += 1;
            *counts.cells.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Identifier-aligned matrix of embedding vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    ids: Vec<String>,
    dim: usize,
    values: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(ids: Vec<String>, dim: usize, values: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Embedding("dim must be at least 1".into()));
        }
        if values.len() != ids.len() * dim {
            return Err(Error::Embedding(format!(
                "{} values do not fill {} rows of dim {dim}",
                values.len(),
                ids.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for id in &ids {
            if id.is_empty() || id.contains(['\n', '\r']) {
                return Err(Error::Embedding(format!("invalid id {id:?}")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::Embedding(format!("duplicate id {id:?}")));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Embedding(format!(
                "non-finite value in row {} ({:?})",
                pos / dim,
                ids[pos / dim]
            )));
        }
        Ok(EmbeddingTable { ids, dim, values })
    }

    pub fn from_rows(ids: Vec<String>, rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Embedding("rows have differing lengths".into()));
        }
        Self::new(ids, dim, rows.concat())
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.values.chunks_exact(self.dim))
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn to_femb_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FEMB_HEADER_LEN + self.values.len() * 4);
        out.extend_from_slice(FEMB_MAGIC);
        out.extend_from_slice(&FEMB_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_femb_bytes(bytes: &[u8], ids: Vec<String>) -> Result<Self> {
        if bytes.len() < FEMB_HEADER_LEN {
            return Err(Error::Embedding(
                "file shorter than the 16-byte header".into(),
            ));
        }
        if &bytes[0..4] != FEMB_MAGIC {
            return Err(Error::Embedding("bad magic".into()));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = word(4);
        if version != FEMB_VERSION {
            return Err(Error::Embedding(format!("unsupported version {version}")));
        }
        let count = word(8) as usize;
        let dim = word(12) as usize;
        let expected = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Embedding("header size overflow".into()))?;
        let payload = &bytes[FEMB_HEADER_LEN..];
        if payload.len() != expected {
            return Err(Error::Embedding(format!(
                "payload length mismatch: header says {count}x{dim} ({expected} bytes), found {}",
                payload.len()
            )));
        }
        if ids.len() != count {
            return Err(Error::Embedding(format!(
                "id count mismatch: {} ids for {count} rows",
                ids.len()
            )));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(ids, dim, values)
    }
}

pub fn load_embeddings(
    bin_path: impl AsRef<Path>,
    ids_path: impl AsRef<Path>,
) -> Result<EmbeddingTable> {
    let (bin_path, ids_path) = (bin_path.as_ref(), ids_path.as_ref());
    let bytes = fs::read(bin_path).map_err(|e| Error::io(bin_path, e))?;
    let ids_text = fs::read_to_string(ids_path).map_err(|e| Error::io(ids_path, e))?;
    let ids = ids_text.lines().map(str::to_string).collect();
    EmbeddingTable::from_femb_bytes(&bytes, ids)
}

pub fn save_embeddings(
    table: &EmbeddingTable,
    bin_path: impl AsRef<Path>,
    ids_path: impl AsRef<Path>,
) -> Result<()> {
    let (bin_path, ids_path) = (bin_path.as_ref(), ids_path.as_ref());
    fs::write(bin_path, table.to_femb_bytes()).map_err(|e| Error::io(bin_path, e))?;
    let mut f = fs::File::create(ids_path).map_err(|e| Error::io(ids_path, e))?;
    for id in &table.ids {
        writeln!(f, "{id}").map_err(|e| Error::io(ids_path, e))?;
    }
    Ok(())
}
