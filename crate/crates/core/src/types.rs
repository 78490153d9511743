//! Domain types shared by every stage of the pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `n x dim` row-major matrix of sentence embeddings.
///
/// Values are stored as `f32`; distances and losses computed from them are
/// accumulated in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(n: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::InvalidMatrix(format!(
                "need n >= 1 and dim >= 1, got {n}x{dim}"
            )));
        }
        if data.len() != n * dim {
            return Err(Error::InvalidMatrix(format!(
                "{n}x{dim} matrix needs {} values, got {}",
                n * dim,
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { n, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    /// Copy of the matrix with every row scaled to unit length.
    pub fn normalized(&self) -> Result<Self> {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.rows() {
            data.extend(l2_normalize(row)?);
        }
        Ok(Self {
            n: self.n,
            dim: self.dim,
            data,
        })
    }

    /// New matrix made of the given rows, in the given order.
    pub fn select_rows(&self, ids: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            if id >= self.n {
                return Err(Error::IdOutOfRange { id, n: self.n });
            }
            data.extend_from_slice(self.row(id));
        }
        Self::new(ids.len(), self.dim, data)
    }
}

/// Squared Euclidean distance accumulated in `f64`.
#[inline]
pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

/// Scale `v` to unit Euclidean norm.
pub fn l2_normalize(v: &[f32]) -> Result<Vec<f32>> {
    let norm = v
        .iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt();
    if v.is_empty() || !norm.is_finite() || norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(v.iter().map(|&x| (f64::from(x) / norm) as f32).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::UnknownSplit {
                found: other.to_string(),
            }),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

/// One text segment: its embedding row, its categories and its split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub id: usize,
    pub categories: BTreeSet<String>,
    pub split: Split,
    pub text: Option<String>,
}

/// One-vs-rest binarization of a category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryTask {
    pub category: String,
    pub positive_ids: BTreeSet<usize>,
}

impl BinaryTask {
    pub fn from_records(category: &str, records: &[SampleRecord]) -> Self {
        let positive_ids = records
            .iter()
            .filter(|r| r.categories.contains(category))
            .map(|r| r.id)
            .collect();
        Self {
            category: category.to_string(),
            positive_ids,
        }
    }

    #[inline]
    pub fn label(&self, id: usize) -> bool {
        self.positive_ids.contains(&id)
    }
}

/// Embeddings paired with their sample records.
///
/// Records are indexed by id, and ids cover `0..n` exactly once.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub embeddings: EmbeddingMatrix,
    records: Vec<SampleRecord>,
}

impl Dataset {
    pub fn new(embeddings: EmbeddingMatrix, mut records: Vec<SampleRecord>) -> Result<Self> {
        let n = embeddings.n();
        let mut seen = vec![false; n];
        for r in &records {
            if r.id >= n {
                return Err(Error::IdOutOfRange { id: r.id, n });
            }
            if std::mem::replace(&mut seen[r.id], true) {
                return Err(Error::DuplicateId(r.id));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::MissingId { missing, n });
        }
        records.sort_by_key(|r| r.id);
        Ok(Self {
            embeddings,
            records,
        })
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    /// Ascending ids of the samples in `split`.
    pub fn ids_in(&self, split: Split) -> Vec<usize> {
        self.records
            .iter()
            .filter(|r| r.split == split)
            .map(|r| r.id)
            .collect()
    }

    pub fn categories(&self) -> BTreeSet<String> {
        self.records
            .iter()
            .flat_map(|r| r.categories.iter().cloned())
            .collect()
    }

    pub fn task(&self, category: &str) -> BinaryTask {
        BinaryTask::from_records(category, &self.records)
    }

    /// Same records over a different embedding space (e.g. projected).
    pub fn with_embeddings(&self, embeddings: EmbeddingMatrix) -> Result<Self> {
        Self::new(embeddings, self.records.clone())
    }
}

/// The labeled / unlabeled partition of an active learning run.
///
/// Labeled samples never return to the unlabeled pool, and the union of the
/// two sets is fixed at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pools {
    labeled: BTreeMap<usize, bool>,
    unlabeled: BTreeSet<usize>,
}

impl Pools {
    /// Every id starts unlabeled.
    pub fn new(ids: impl IntoIterator<Item = usize>) -> Self {
        Self {
            labeled: BTreeMap::new(),
            unlabeled: ids.into_iter().collect(),
        }
    }

    /// Move `id` from unlabeled to labeled.
    pub fn label(&mut self, id: usize, label: bool) -> Result<()> {
        if !self.unlabeled.remove(&id) {
            return Err(Error::InvalidArgument(format!(
                "sample {id} is not in the unlabeled pool"
            )));
        }
        self.labeled.insert(id, label);
        Ok(())
    }

    pub fn label_all(&mut self, items: impl IntoIterator<Item = (usize, bool)>) -> Result<()> {
        items.into_iter().try_for_each(|(id, l)| self.label(id, l))
    }

    pub fn labeled(&self) -> &BTreeMap<usize, bool> {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &BTreeSet<usize> {
        &self.unlabeled
    }

    pub fn unlabeled_ids(&self) -> Vec<usize> {
        self.unlabeled.iter().copied().collect()
    }

    pub fn labeled_ids(&self) -> Vec<usize> {
        self.labeled.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_disjoint(&self) -> bool {
        self.labeled.keys().all(|id| !self.unlabeled.contains(id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    HardMining,
    DropoutPerceptron,
    Dal,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Random,
        Strategy::HardMining,
        Strategy::DropoutPerceptron,
        Strategy::Dal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::HardMining => "hard_mining",
            Strategy::DropoutPerceptron => "dropout_perceptron",
            Strategy::Dal => "dal",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == norm)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown strategy {s:?}; allowed: random, hard_mining, dropout_perceptron, dal"
                ))
            })
    }
}

/// Shape of one active learning experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlRunConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub init_pos: usize,
    pub init_neg: usize,
    pub seeds: Vec<u64>,
    pub strategy: Strategy,
}

impl Default for AlRunConfig {
    fn default() -> Self {
        Self {
            iterations: 5,
            batch_size: 10,
            init_pos: 5,
            init_neg: 5,
            seeds: vec![0, 1, 2],
            strategy: Strategy::Random,
        }
    }
}

impl AlRunConfig {
    /// Size of the first labeled set.
    pub fn initial_size(&self) -> usize {
        self.init_pos + self.init_neg
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        if self.init_pos == 0 || self.init_neg == 0 {
            return Err(Error::InvalidArgument(
                "initial set needs at least one positive and one negative".into(),
            ));
        }
        Ok(())
    }
}
