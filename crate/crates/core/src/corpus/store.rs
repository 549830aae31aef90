use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{split_into_chunks, Chunk, ChunkingConfig, CorpusError, DocFormat, Document, SourceCategory};

pub const MANIFEST_FILE: &str = "corpus.json";
pub const CHUNKS_FILE: &str = "chunks.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub doc_id: String,
    pub source_path: String,
    pub category: SourceCategory,
    pub format: DocFormat,
    pub chunk_count: usize,
    pub content_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub documents: Vec<ManifestEntry>,
    pub created_at: DateTime<Utc>,
    pub chunking_config: ChunkingConfig,
}

/// Line format of `chunks.jsonl`.
#[derive(Serialize, Deserialize)]
struct ChunkRecord {
    id: String,
    doc_id: String,
    ordinal: usize,
    text: String,
    word_count: usize,
    #[serde(default)]
    overlap_words: usize,
}

/// In-memory corpus: document metadata plus every stored chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub chunking: ChunkingConfig,
    pub created_at: DateTime<Utc>,
    documents: BTreeMap<String, ManifestEntry>,
    chunks: BTreeMap<String, Chunk>,
}

impl Corpus {
    pub fn new(chunking: ChunkingConfig) -> Self {
        Self {
            chunking,
            created_at: Utc::now(),
            documents: BTreeMap::new(),
            chunks: BTreeMap::new(),
        }
    }

    /// Chunk `doc` and store it. A previous document with the same id or
    /// source path is replaced; the ids of its chunks are returned so the
    /// caller can drop them from the index.
    pub fn add_document(&mut self, doc: &Document) -> Result<AddedDocument, CorpusError> {
        let chunks = split_into_chunks(doc, self.chunking)?;
        let stale: Vec<String> = self
            .documents
            .values()
            .filter(|e| e.doc_id == doc.id || e.source_path == doc.source_path)
            .map(|e| e.doc_id.clone())
            .collect();
        let mut removed = Vec::new();
        for doc_id in stale {
            removed.extend(self.remove_document(&doc_id));
        }
        self.documents.insert(
            doc.id.clone(),
            ManifestEntry {
                doc_id: doc.id.clone(),
                source_path: doc.source_path.clone(),
                category: doc.category,
                format: doc.format,
                chunk_count: chunks.len(),
                content_digest: doc.content_digest(),
            },
        );
        let added: Vec<Chunk> = chunks.clone();
        for chunk in chunks {
            self.chunks.insert(chunk.id.clone(), chunk);
        }
        removed.retain(|id| !self.chunks.contains_key(id));
        Ok(AddedDocument {
            chunks: added,
            removed_chunk_ids: removed,
        })
    }

    /// Remove a document and its chunks, returning the removed chunk ids.
    pub fn remove_document(&mut self, doc_id: &str) -> Vec<String> {
        if self.documents.remove(doc_id).is_none() {
            return Vec::new();
        }
        let prefix = format!("{doc_id}#");
        let ids: Vec<String> = self
            .chunks
            .range(prefix.clone()..)
            .take_while(|(id, _)| id.starts_with(&prefix))
            .map(|(id, _)| id.clone())
            .collect();
        for id in &ids {
            self.chunks.remove(id);
        }
        ids
    }

    pub fn document(&self, doc_id: &str) -> Option<&ManifestEntry> {
        self.documents.get(doc_id)
    }

    pub fn documents(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.documents.values()
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.chunks.get(chunk_id)
    }

    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.chunks.values()
    }

    pub fn chunk_at(&self, doc_id: &str, ordinal: usize) -> Option<&Chunk> {
        self.chunks.get(&super::chunk_id(doc_id, ordinal))
    }

    /// Category of the document owning `chunk_id`.
    pub fn category_of(&self, chunk_id: &str) -> Option<SourceCategory> {
        let chunk = self.chunks.get(chunk_id)?;
        self.documents.get(&chunk.doc_id).map(|d| d.category)
    }

    pub fn chunks_of(&self, doc_id: &str) -> Vec<&Chunk> {
        let count = self.documents.get(doc_id).map_or(0, |d| d.chunk_count);
        (0..count).filter_map(|o| self.chunk_at(doc_id, o)).collect()
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn manifest(&self) -> CorpusManifest {
        CorpusManifest {
            documents: self.documents.values().cloned().collect(),
            created_at: self.created_at,
            chunking_config: self.chunking,
        }
    }

    /// Write `corpus.json` and `chunks.jsonl` into `dir`. Each file is written
    /// to a temporary name first and renamed into place.
    pub fn save(&self, dir: &Path) -> Result<(), CorpusError> {
        std::fs::create_dir_all(dir)?;
        let manifest = serde_json::to_vec_pretty(&self.manifest())?;
        write_atomic(&dir.join(MANIFEST_FILE), |w| Ok(w.write_all(&manifest)?))?;
        write_atomic(&dir.join(CHUNKS_FILE), |w| {
            for chunk in self.chunks.values() {
                let record = ChunkRecord {
                    id: chunk.id.clone(),
                    doc_id: chunk.doc_id.clone(),
                    ordinal: chunk.ordinal,
                    text: chunk.text.clone(),
                    word_count: chunk.word_count,
                    overlap_words: chunk.overlap_words,
                };
                serde_json::to_writer(&mut *w, &record)?;
                w.write_all(b"\n")?;
            }
            Ok(())
        })
    }

    /// Load a corpus saved with [`Corpus::save`]. A directory without a
    /// manifest yields an empty corpus with the given chunking config.
    pub fn load(dir: &Path, chunking: ChunkingConfig) -> Result<Self, CorpusError> {
        let manifest_path = dir.join(MANIFEST_FILE);
        if !manifest_path.exists() {
            return Ok(Self::new(chunking));
        }
        let manifest: CorpusManifest = serde_json::from_slice(&std::fs::read(&manifest_path)?)?;
        let mut corpus = Self {
            chunking: manifest.chunking_config,
            created_at: manifest.created_at,
            documents: manifest
                .documents
                .into_iter()
                .map(|e| (e.doc_id.clone(), e))
                .collect(),
            chunks: BTreeMap::new(),
        };
        let file = std::fs::File::open(dir.join(CHUNKS_FILE))?;
        for line in std::io::BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: ChunkRecord = serde_json::from_str(&line)?;
            corpus.chunks.insert(
                r.id.clone(),
                Chunk {
                    id: r.id,
                    doc_id: r.doc_id,
                    ordinal: r.ordinal,
                    text: r.text,
                    word_count: r.word_count,
                    overlap_words: r.overlap_words,
                    prev: None,
                    next: None,
                },
            );
        }
        corpus.relink()?;
        Ok(corpus)
    }

    fn relink(&mut self) -> Result<(), CorpusError> {
        for entry in self.documents.values() {
            for ordinal in 0..entry.chunk_count {
                let id = super::chunk_id(&entry.doc_id, ordinal);
                let prev = ordinal.checked_sub(1).map(|o| super::chunk_id(&entry.doc_id, o));
                let next =
                    (ordinal + 1 < entry.chunk_count).then(|| super::chunk_id(&entry.doc_id, ordinal + 1));
                let chunk = self
                    .chunks
                    .get_mut(&id)
                    .ok_or_else(|| CorpusError::CorruptStore(format!("manifest lists missing chunk {id}")))?;
                chunk.prev = prev;
                chunk.next = next;
            }
        }
        let listed: usize = self.documents.values().map(|d| d.chunk_count).sum();
        if listed != self.chunks.len() {
            return Err(CorpusError::CorruptStore(format!(
                "manifest lists {listed} chunks, store holds {}",
                self.chunks.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AddedDocument {
    pub chunks: Vec<Chunk>,
    pub removed_chunk_ids: Vec<String>,
}

pub(crate) fn write_atomic<F>(path: &Path, write: F) -> Result<(), CorpusError>
where
    F: FnOnce(&mut BufWriter<std::fs::File>) -> Result<(), CorpusError>,
{
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(std::fs::File::create(&tmp)?);
        write(&mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ingest_bytes;

    fn corpus_with_two_docs() -> Corpus {
        let mut corpus = Corpus::new(ChunkingConfig {
            chunk_words: 4,
            overlap_words: 1,
        });
        let a = ingest_bytes(
            "a.md",
            b"one two three four five six seven",
            SourceCategory::Documentation,
            DocFormat::Markdown,
        )
        .unwrap();
        let b = ingest_bytes(
            "b.xml",
            b"<x> y </x>",
            SourceCategory::InputExample,
            DocFormat::Xml,
        )
        .unwrap();
        corpus.add_document(&a).unwrap();
        corpus.add_document(&b).unwrap();
        corpus
    }

    #[test]
    fn manifest_counts_match_stored_chunks() {
        let corpus = corpus_with_two_docs();
        for entry in corpus.manifest().documents {
            assert_eq!(entry.chunk_count, corpus.chunks_of(&entry.doc_id).len());
        }
        assert_eq!(corpus.chunk_count(), 3);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = corpus_with_two_docs();
        corpus.save(dir.path()).unwrap();
        let loaded = Corpus::load(dir.path(), ChunkingConfig::default()).unwrap();
        assert_eq!(loaded, corpus);
        let first_line = std::fs::read_to_string(dir.path().join(CHUNKS_FILE)).unwrap();
        let v: serde_json::Value = serde_json::from_str(first_line.lines().next().unwrap()).unwrap();
        for key in ["id", "doc_id", "ordinal", "text", "word_count"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn reingesting_a_path_replaces_the_document() {
        let mut corpus = corpus_with_two_docs();
        let old_ids: Vec<String> = corpus.chunks().map(|c| c.id.clone()).collect();
        let a2 = ingest_bytes(
            "a.md",
            b"completely new text",
            SourceCategory::Documentation,
            DocFormat::Markdown,
        )
        .unwrap();
        let added = corpus.add_document(&a2).unwrap();
        assert_eq!(corpus.documents().count(), 2);
        assert_eq!(added.removed_chunk_ids.len(), 2);
        assert!(added.removed_chunk_ids.iter().all(|id| old_ids.contains(id)));
    }

    #[test]
    fn missing_manifest_loads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = Corpus::load(dir.path(), ChunkingConfig::default()).unwrap();
        assert!(corpus.is_empty());
    }
}
