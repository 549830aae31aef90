//! Prompt → ranked context chunks: flat or category-stratified top-k,
//! followed by neighbor expansion.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, SourceCategory};
use crate::index::{embed_text, EmbedderConfig, IndexError, VectorIndex};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("the index is empty")]
    EmptyIndex,
    #[error("the prompt is empty")]
    EmptyPrompt,
    #[error("result references unknown chunk {0}")]
    DanglingChunkRef(String),
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    #[default]
    Flat,
    Stratified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub k_total: usize,
    pub quotas: Option<BTreeMap<SourceCategory, usize>>,
    pub neighbor_radius: usize,
    pub min_score: f64,
    pub mode: RetrievalMode,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k_total: 4,
            quotas: None,
            neighbor_radius: 1,
            min_score: 0.0,
            mode: RetrievalMode::Flat,
        }
    }
}

/// Quotas used by stratified mode when none are configured.
pub fn default_quotas() -> BTreeMap<SourceCategory, usize> {
    BTreeMap::from([
        (SourceCategory::ApiReference, 1),
        (SourceCategory::InputExample, 1),
        (SourceCategory::Documentation, 1),
        (SourceCategory::ProjectReport, 0),
        (SourceCategory::DomainLiterature, 1),
    ])
}

impl RetrievalConfig {
    pub fn effective_quotas(&self) -> BTreeMap<SourceCategory, usize> {
        self.quotas.clone().unwrap_or_else(default_quotas)
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.k_total == 0 {
            return Err(RetrievalError::InvalidConfig("k_total must be at least 1".into()));
        }
        if self.mode == RetrievalMode::Stratified && self.effective_quotas().values().sum::<usize>() == 0 {
            return Err(RetrievalError::InvalidConfig(
                "stratified mode needs at least one positive quota".into(),
            ));
        }
        Ok(())
    }
}

/// Parse `api-reference=1,input-example=2`.
pub fn parse_quotas(spec: &str) -> Result<BTreeMap<SourceCategory, usize>, RetrievalError> {
    let mut quotas = BTreeMap::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, count) = part
            .split_once('=')
            .ok_or_else(|| RetrievalError::InvalidConfig(format!("expected category=count, got `{part}`")))?;
        let category: SourceCategory = name
            .trim()
            .parse()
            .map_err(|e: CorpusError| RetrievalError::InvalidConfig(e.to_string()))?;
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| RetrievalError::InvalidConfig(format!("bad quota count in `{part}`")))?;
        quotas.insert(category, count);
    }
    Ok(quotas)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "anchor", rename_all = "snake_case")]
pub enum Origin {
    DirectHit,
    NeighborOf(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub chunk_id: String,
    /// Cosine score; neighbors carry their anchor's score.
    pub score: f64,
    pub category: SourceCategory,
    pub origin: Origin,
}

impl RetrievalResult {
    pub fn is_direct(&self) -> bool {
        self.origin == Origin::DirectHit
    }
}

pub fn retrieve(
    prompt: &str,
    config: &RetrievalConfig,
    index: &VectorIndex,
    corpus: &Corpus,
    embedder: &EmbedderConfig,
) -> Result<Vec<RetrievalResult>, RetrievalError> {
    config.validate()?;
    if prompt.trim().is_empty() {
        return Err(RetrievalError::EmptyPrompt);
    }
    if index.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let query = embed_text(prompt, embedder)?;

    let mut direct = Vec::new();
    let mut collect = |k: usize, filter: Option<SourceCategory>| -> Result<(), RetrievalError> {
        for hit in index.search(&query, k, filter)? {
            if hit.score < config.min_score {
                continue;
            }
            let category = index
                .get(&hit.chunk_id)
                .map(|e| e.category)
                .ok_or_else(|| RetrievalError::DanglingChunkRef(hit.chunk_id.clone()))?;
            direct.push(RetrievalResult {
                chunk_id: hit.chunk_id,
                score: hit.score,
                category,
                origin: Origin::DirectHit,
            });
        }
        Ok(())
    };
    match config.mode {
        RetrievalMode::Flat => collect(config.k_total, None)?,
        RetrievalMode::Stratified => {
            for (category, quota) in config.effective_quotas() {
                if quota > 0 {
                    collect(quota, Some(category))?;
                }
            }
        }
    }
    direct.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.chunk_id.cmp(&b.chunk_id))
    });

    Ok(expand_neighbors(&direct, config.neighbor_radius, corpus))
}

/// Append the ordinal neighbors of every direct hit.
///
/// Input order is kept. Neighbor groups follow all input records, one group
/// per anchor in input order, each in ascending ordinal order. A chunk that
/// is already present (as a hit or an earlier neighbor) is not repeated.
pub fn expand_neighbors(results: &[RetrievalResult], radius: usize, corpus: &Corpus) -> Vec<RetrievalResult> {
    let mut out: Vec<RetrievalResult> = Vec::with_capacity(results.len());
    let mut seen: HashSet<String> = HashSet::new();
    for r in results {
        if seen.insert(r.chunk_id.clone()) {
            out.push(r.clone());
        }
    }
    if radius == 0 {
        return out;
    }

    for anchor in results.iter().filter(|r| r.is_direct()) {
        let Some(chunk) = corpus.chunk(&anchor.chunk_id) else {
            continue;
        };
        let Some(doc) = corpus.document(&chunk.doc_id) else {
            continue;
        };
        let lo = chunk.ordinal.saturating_sub(radius);
        let hi = (chunk.ordinal + radius).min(doc.chunk_count.saturating_sub(1));
        for ordinal in (lo..=hi).filter(|&o| o != chunk.ordinal) {
            let Some(neighbor) = corpus.chunk_at(&doc.doc_id, ordinal) else {
                continue;
            };
            if seen.insert(neighbor.id.clone()) {
                out.push(RetrievalResult {
                    chunk_id: neighbor.id.clone(),
                    score: anchor.score,
                    category: doc.category,
                    origin: Origin::NeighborOf(anchor.chunk_id.clone()),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Citation {
    pub chunk_id: String,
    pub doc_path: String,
    pub ordinal: usize,
    pub category: SourceCategory,
    pub score: f64,
}

pub fn format_citations(
    results: &[RetrievalResult],
    corpus: &Corpus,
) -> Result<Vec<Citation>, RetrievalError> {
    let mut seen = HashSet::new();
    let mut citations = Vec::new();
    for r in results {
        if !seen.insert(r.chunk_id.as_str()) {
            continue;
        }
        let chunk = corpus
            .chunk(&r.chunk_id)
            .ok_or_else(|| RetrievalError::DanglingChunkRef(r.chunk_id.clone()))?;
        let doc = corpus
            .document(&chunk.doc_id)
            .ok_or_else(|| RetrievalError::DanglingChunkRef(r.chunk_id.clone()))?;
        citations.push(Citation {
            chunk_id: r.chunk_id.clone(),
            doc_path: doc.source_path.clone(),
            ordinal: chunk.ordinal,
            category: r.category,
            score: r.score,
        });
    }
    Ok(citations)
}
