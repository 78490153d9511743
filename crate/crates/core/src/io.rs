//! On-disk formats.
//!
//! `.aleb` embedding files are a 13-byte header (`b"ALEB"`, version byte,
//! `n` and `dim` as little-endian `u32`) followed by `n * dim` little-endian
//! `f32` values in row-major order. Projection heads use the same layout
//! under the `b"ALPJ"` magic, classifier heads under `b"ALCH"`. Labels are
//! JSON lines; cluster assignments and run reports are JSON documents.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{EmbeddingMatrix, SampleRecord, Split};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"ALEB";
pub const PROJECTION_MAGIC: [u8; 4] = *b"ALPJ";
pub const CLASSIFIER_MAGIC: [u8; 4] = *b"ALCH";
pub const FORMAT_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 13;

pub fn encode_embeddings(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.data().len() * 4);
    out.extend_from_slice(&EMBEDDING_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(m.n() as u32).to_le_bytes());
    out.extend_from_slice(&(m.dim() as u32).to_le_bytes());
    put_f32s(&mut out, m.data());
    out
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let (n, dim, payload) = split_header(bytes, EMBEDDING_MAGIC)?;
    let expected = HEADER_LEN as u64 + n as u64 * dim as u64 * 4;
    check_len(bytes.len() as u64, expected)?;
    EmbeddingMatrix::new(n, dim, get_f32s(payload))
}

pub fn write_embeddings(path: impl AsRef<Path>, m: &EmbeddingMatrix) -> Result<()> {
    write_bytes(path.as_ref(), &encode_embeddings(m))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    decode_embeddings(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Magic, version and the two `u32` dimensions; returns the remaining bytes.
pub(crate) fn split_header(bytes: &[u8], magic: [u8; 4]) -> Result<(usize, usize, &[u8])> {
    if bytes.len() >= 4 && bytes[..4] != magic {
        let mut found = [0u8; 4];
        found.copy_from_slice(&bytes[..4]);
        return Err(Error::BadMagic {
            expected: magic,
            found,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: bytes[4],
        });
    }
    let a = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let b = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    Ok((a, b, &bytes[HEADER_LEN..]))
}

pub(crate) fn check_len(actual: u64, expected: u64) -> Result<()> {
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(Error::InvalidMatrix(format!(
            "{} trailing bytes after a {expected}-byte payload",
            actual - expected
        )));
    }
    Ok(())
}

pub(crate) fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn get_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelLine {
    id: usize,
    labels: Vec<String>,
    split: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

/// Parse newline-delimited label records. Blank lines are skipped.
pub fn parse_labels(reader: impl BufRead) -> Result<Vec<SampleRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::LabelParse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: LabelLine = serde_json::from_str(&line).map_err(|e| Error::LabelParse {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(raw.id) {
            return Err(Error::DuplicateId(raw.id));
        }
        out.push(SampleRecord {
            id: raw.id,
            categories: raw.labels.into_iter().collect::<BTreeSet<_>>(),
            split: raw.split.parse::<Split>()?,
            text: raw.text,
        });
    }
    Ok(out)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_labels(BufReader::new(file))
}

/// Labels checked against an `n`-row embedding file: every id in `0..n`.
pub fn read_labels_for(path: impl AsRef<Path>, n: usize) -> Result<Vec<SampleRecord>> {
    let records = read_labels(path)?;
    if let Some(r) = records.iter().find(|r| r.id >= n) {
        return Err(Error::IdOutOfRange { id: r.id, n });
    }
    Ok(records)
}

pub fn encode_labels(records: &[SampleRecord]) -> Result<Vec<u8>> {
    let mut sorted: Vec<&SampleRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.id);
    let mut out = Vec::new();
    for r in sorted {
        let line = LabelLine {
            id: r.id,
            labels: r.categories.iter().cloned().collect(),
            split: r.split.as_str().to_string(),
            text: r.text.clone(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_labels(path: impl AsRef<Path>, records: &[SampleRecord]) -> Result<()> {
    write_bytes(path.as_ref(), &encode_labels(records)?)
}

/// Cluster assignment artifact.
///
/// `assignments` has one entry per embedding row; rows that were not part of
/// the clustered subset carry `-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClustersFile {
    pub k: usize,
    pub seed: u64,
    pub inertia: f64,
    pub assignments: Vec<i64>,
    pub medoid_ids: Vec<usize>,
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write_bytes(path.as_ref(), &to_json_bytes(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Write `text` to `path`, creating parent directories.
pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    write_bytes(path.as_ref(), text.as_bytes())
}
