//! Embeddings and an exact, brute-force cosine index.

mod embed;
mod store;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SourceCategory;

pub use embed::{
    embed_text, fnv1a, hash_slot, EmbedderConfig, EmbedderProvider, DEFAULT_HASH_DIM, EMBED_URL_ENV,
};
pub use store::{load_index, save_index, INDEX_FILE, INDEX_FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("invalid embedder config: {0}")]
    InvalidConfig(String),
    #[error("index format version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("index I/O failure: {0}")]
    IoFailure(#[from] std::io::Error),
}

/// A unit-length embedding, or the all-zeros sentinel for text with no words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    /// Scale `values` to unit length. All-zero input stays the zero sentinel.
    pub fn normalized(mut values: Vec<f32>) -> Self {
        let norm = values
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v = (*v as f64 / norm) as f32;
            }
        }
        Self { values }
    }

    /// Wrap values that are already normalized (or zero).
    pub fn from_raw(values: Vec<f32>) -> Self {
        Self { values }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }
}

/// Dot product of two normalized vectors; 0 when either is the zero sentinel.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, IndexError> {
    if a.dim() != b.dim() {
        return Err(IndexError::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(dot(&a.values, &b.values))
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub chunk_id: String,
    pub category: SourceCategory,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub chunk_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    provider_digest: String,
    entries: BTreeMap<String, IndexEntry>,
}

impl VectorIndex {
    pub fn new(dim: usize, provider_digest: impl Into<String>) -> Self {
        Self {
            dim,
            provider_digest: provider_digest.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn for_embedder(config: &EmbedderConfig) -> Self {
        Self::new(config.dim, config.digest())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provider_digest(&self) -> &str {
        &self.provider_digest
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Insert or replace the entry for `entry.chunk_id`.
    pub fn add_entry(&mut self, entry: IndexEntry) -> Result<(), IndexError> {
        self.check_dim(entry.vector.dim())?;
        self.entries.insert(entry.chunk_id.clone(), entry);
        Ok(())
    }

    pub fn remove_entry(&mut self, chunk_id: &str) -> Option<IndexEntry> {
        self.entries.remove(chunk_id)
    }

    pub fn get(&self, chunk_id: &str) -> Option<&IndexEntry> {
        self.entries.get(chunk_id)
    }

    /// Entries in ascending chunk id order.
    pub fn entries(&self) -> impl Iterator<Item = &IndexEntry> {
        self.entries.values()
    }

    /// Exact top-`k` by descending cosine score, ties broken by ascending
    /// chunk id.
    pub fn search(
        &self,
        query: &EmbeddingVector,
        k: usize,
        category_filter: Option<SourceCategory>,
    ) -> Result<Vec<SearchHit>, IndexError> {
        self.check_dim(query.dim())?;
        if k == 0 {
            return Ok(Vec::new());
        }
        // Max-heap keyed on "worse": the root is the weakest kept hit.
        let mut heap: BinaryHeap<Ranked<'_>> = BinaryHeap::with_capacity(k + 1);
        for entry in self.entries.values() {
            if category_filter.is_some_and(|c| c != entry.category) {
                continue;
            }
            let candidate = Ranked {
                score: dot(&query.values, &entry.vector.values),
                chunk_id: &entry.chunk_id,
            };
            if heap.len() < k {
                heap.push(candidate);
            } else if heap.peek().is_some_and(|worst| candidate < *worst) {
                heap.pop();
                heap.push(candidate);
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|r| SearchHit {
                chunk_id: r.chunk_id.to_string(),
                score: r.score,
            })
            .collect())
    }

    fn check_dim(&self, found: usize) -> Result<(), IndexError> {
        if found != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                found,
            });
        }
        Ok(())
    }
}

/// Orders hits best-first: higher score, then lower chunk id.
struct Ranked<'a> {
    score: f64,
    chunk_id: &'a str,
}

impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.chunk_id.cmp(other.chunk_id))
    }
}

impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked<'_> {}
