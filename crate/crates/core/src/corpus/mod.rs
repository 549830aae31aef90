//! Document ingestion, markup-preserving chunking and the on-disk corpus.

mod chunker;
mod ingest;
mod store;
pub mod words;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chunker::{reassemble, split_into_chunks, ChunkingConfig};
pub use ingest::{detect_format, ingest_bytes, ingest_document};
pub use store::{Corpus, CorpusManifest, ManifestEntry};
pub use words::count_words;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("document {0} contains no words after normalization")]
    EmptyDocument(String),
    #[error("{path}: {invalid_bytes} of {total_bytes} bytes are not valid UTF-8")]
    DecodeFailure {
        path: String,
        invalid_bytes: usize,
        total_bytes: usize,
    },
    #[error("invalid chunking config: overlap_words ({overlap}) must be smaller than chunk_words ({chunk})")]
    InvalidConfig { chunk: usize, overlap: usize },
    #[error("incomplete chunk set: missing ordinal {0}")]
    IncompleteChunkSet(usize),
    #[error("chunks belong to more than one document")]
    MixedDocuments,
    #[error("unknown source category `{0}`")]
    UnknownCategory(String),
    #[error("unknown document format `{0}`")]
    UnknownFormat(String),
    #[error("corpus store is corrupt: {0}")]
    CorruptStore(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Provenance of a source document. Drives stratified retrieval and the
/// ordering of context blocks in assembled prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceCategory {
    ApiReference,
    InputExample,
    Documentation,
    ProjectReport,
    DomainLiterature,
}

impl SourceCategory {
    pub const ALL: [SourceCategory; 5] = [
        SourceCategory::ApiReference,
        SourceCategory::InputExample,
        SourceCategory::Documentation,
        SourceCategory::ProjectReport,
        SourceCategory::DomainLiterature,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceCategory::ApiReference => "api-reference",
            SourceCategory::InputExample => "input-example",
            SourceCategory::Documentation => "documentation",
            SourceCategory::ProjectReport => "project-report",
            SourceCategory::DomainLiterature => "domain-literature",
        }
    }
}

impl fmt::Display for SourceCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceCategory {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SourceCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| CorpusError::UnknownCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocFormat {
    Xml,
    Markdown,
    #[serde(rename = "plain")]
    PlainText,
}

impl DocFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            DocFormat::Xml => "xml",
            DocFormat::Markdown => "markdown",
            DocFormat::PlainText => "plain",
        }
    }
}

impl FromStr for DocFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "xml" => Ok(DocFormat::Xml),
            "markdown" | "md" => Ok(DocFormat::Markdown),
            "plain" | "text" | "txt" => Ok(DocFormat::PlainText),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub source_path: String,
    pub category: SourceCategory,
    pub format: DocFormat,
    /// Normalized text: line endings unified to `\n`, nothing else touched.
    pub content: String,
    pub word_count: usize,
    /// Number of invalid UTF-8 sequences replaced with U+FFFD while decoding.
    pub replacement_count: usize,
}

impl Document {
    pub fn content_digest(&self) -> String {
        crate::digest::sha256_hex(self.content.as_bytes())
    }
}

/// A contiguous slice of a document's normalized content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub doc_id: String,
    pub ordinal: usize,
    pub text: String,
    pub word_count: usize,
    /// Leading words shared with the previous chunk.
    #[serde(default)]
    pub overlap_words: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prev: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next: Option<String>,
}

/// Chunk ids sort by document, then ordinal.
pub fn chunk_id(doc_id: &str, ordinal: usize) -> String {
    format!("{doc_id}#{ordinal:05}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_strings_round_trip() {
        for c in SourceCategory::ALL {
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.as_str()));
            assert_eq!(serde_json::from_str::<SourceCategory>(&json).unwrap(), c);
            assert_eq!(c.as_str().parse::<SourceCategory>().unwrap(), c);
            assert_eq!(c.as_str(), c.as_str().to_lowercase());
        }
        assert!("api_reference".parse::<SourceCategory>().is_err());
    }

    #[test]
    fn chunk_ids_sort_by_ordinal() {
        assert!(chunk_id("d", 9) < chunk_id("d", 10));
    }
}
