//! retrieve → assemble → generate over one corpus/index snapshot.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    detect_format, ingest_document, ChunkingConfig, Corpus, CorpusError, DocFormat, Document, SourceCategory,
};
use crate::index::{
    embed_text, load_index, save_index, EmbedderConfig, IndexEntry, IndexError, VectorIndex, INDEX_FILE,
};
use crate::llm_client::{generate, LlmError, LlmRequest, LlmResponse, ProviderConfig};
use crate::retrieval::{
    format_citations, retrieve, Citation, RetrievalConfig, RetrievalError, RetrievalResult,
};
use crate::session::{
    assemble_prompt, BudgetConfig, PromptBundle, Role, SessionError, SessionTree, SystemPromptTemplates,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("index was built with a different embedder ({found}), config expects {expected}")]
    EmbedderMismatch { expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub software_name: String,
    /// Append the focus, knowledge-limitation and uncertainty clauses.
    pub focus_system_prompt: bool,
    pub templates: SystemPromptTemplates,
    pub model: String,
    pub chunking: ChunkingConfig,
    pub embedder: EmbedderConfig,
    pub retrieval: RetrievalConfig,
    pub budget: BudgetConfig,
    pub provider: ProviderConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            software_name: "Pasimodo".into(),
            focus_system_prompt: true,
            templates: SystemPromptTemplates::default(),
            model: "stub".into(),
            chunking: ChunkingConfig::default(),
            embedder: EmbedderConfig::default(),
            retrieval: RetrievalConfig::default(),
            budget: BudgetConfig::default(),
            provider: ProviderConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn digest(&self) -> String {
        crate::digest::json_digest(self)
    }
}

/// The result of one turn before anything is written to the session.
#[derive(Debug, Clone)]
pub struct Answer {
    pub results: Vec<RetrievalResult>,
    pub citations: Vec<Citation>,
    pub bundle: PromptBundle,
    pub response: LlmResponse,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub corpus: Arc<Corpus>,
    pub index: Arc<VectorIndex>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, corpus: Arc<Corpus>, index: Arc<VectorIndex>) -> Self {
        Self {
            config,
            corpus,
            index,
        }
    }

    pub fn empty(config: PipelineConfig) -> Self {
        let corpus = Corpus::new(config.chunking);
        let index = VectorIndex::for_embedder(&config.embedder);
        Self::new(config, Arc::new(corpus), Arc::new(index))
    }

    /// Load `corpus.json`, `chunks.jsonl` and `index.jsonl` from `dir`.
    /// Missing files give an empty corpus and index.
    pub fn load(config: PipelineConfig, dir: &Path) -> Result<Self, PipelineError> {
        let (corpus, index) = load_snapshot(&config, dir)?;
        Ok(Self::new(config, Arc::new(corpus), Arc::new(index)))
    }

    pub fn system_prompt(&self) -> String {
        self.config
            .templates
            .render(&self.config.software_name, self.config.focus_system_prompt)
    }

    pub fn new_session(&self) -> SessionTree {
        SessionTree::new(self.system_prompt())
    }

    /// Run one turn against `tree`'s active path without modifying it.
    pub fn answer(
        &self,
        tree: &SessionTree,
        prompt: &str,
        retrieval: Option<&RetrievalConfig>,
    ) -> Result<Answer, PipelineError> {
        let retrieval = retrieval.unwrap_or(&self.config.retrieval);
        let results = match retrieve(
            prompt,
            retrieval,
            &self.index,
            &self.corpus,
            &self.config.embedder,
        ) {
            Ok(r) => r,
            Err(RetrievalError::EmptyIndex) => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let bundle = assemble_prompt(
            &self.system_prompt(),
            &results,
            &self.corpus,
            tree,
            prompt,
            &self.config.budget,
        )?;
        let citations = format_citations(&results, &self.corpus)?
            .into_iter()
            .filter(|c| bundle.context_blocks.iter().any(|b| b.chunk_id == c.chunk_id))
            .collect();
        let mut request = LlmRequest::from_bundle(self.config.model.clone(), &bundle);
        request.max_context_tokens = self.config.budget.max_context_tokens;
        let response = generate(&request, &self.config.provider)?;
        Ok(Answer {
            results,
            citations,
            bundle,
            response,
        })
    }

    /// [`Pipeline::answer`], then append the user prompt and the reply to the
    /// active branch. Nothing is appended when the turn fails.
    pub fn chat(
        &self,
        tree: &mut SessionTree,
        prompt: &str,
        retrieval: Option<&RetrievalConfig>,
    ) -> Result<Answer, PipelineError> {
        let answer = self.answer(tree, prompt, retrieval)?;
        tree.append(Role::User, prompt, Vec::new())?;
        tree.append(
            Role::Assistant,
            answer.response.content.clone(),
            answer.citations.clone(),
        )?;
        Ok(answer)
    }
}

pub fn load_snapshot(config: &PipelineConfig, dir: &Path) -> Result<(Corpus, VectorIndex), PipelineError> {
    let corpus = Corpus::load(dir, config.chunking)?;
    let index_path = dir.join(INDEX_FILE);
    let index = if index_path.exists() {
        load_index(&index_path)?
    } else {
        VectorIndex::for_embedder(&config.embedder)
    };
    let expected = config.embedder.digest();
    if index.provider_digest() != expected {
        return Err(PipelineError::EmbedderMismatch {
            expected,
            found: index.provider_digest().to_string(),
        });
    }
    Ok((corpus, index))
}

pub fn save_snapshot(corpus: &Corpus, index: &VectorIndex, dir: &Path) -> Result<(), PipelineError> {
    corpus.save(dir)?;
    save_index(index, &dir.join(INDEX_FILE))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestSummary {
    pub doc_id: String,
    pub chunk_count: usize,
}

/// Chunk, embed and index `doc`, replacing any earlier version of it.
pub fn ingest_into(
    corpus: &mut Corpus,
    index: &mut VectorIndex,
    doc: &Document,
    embedder: &EmbedderConfig,
) -> Result<IngestSummary, PipelineError> {
    // Embed before touching either store so a failure leaves both unchanged.
    let chunks = crate::corpus::split_into_chunks(doc, corpus.chunking)?;
    let vectors = chunks
        .iter()
        .map(|c| embed_text(&c.text, embedder))
        .collect::<Result<Vec<_>, _>>()?;

    let added = corpus.add_document(doc)?;
    for id in &added.removed_chunk_ids {
        index.remove_entry(id);
    }
    for (chunk, vector) in chunks.iter().zip(vectors) {
        index.add_entry(IndexEntry {
            chunk_id: chunk.id.clone(),
            category: doc.category,
            vector,
        })?;
    }
    Ok(IngestSummary {
        doc_id: doc.id.clone(),
        chunk_count: chunks.len(),
    })
}

/// Ingest a file, or every file below a directory in path order.
pub fn ingest_path(
    corpus: &mut Corpus,
    index: &mut VectorIndex,
    path: &Path,
    category: SourceCategory,
    format: Option<DocFormat>,
    embedder: &EmbedderConfig,
) -> Result<Vec<IngestSummary>, PipelineError> {
    let mut files = Vec::new();
    collect_files(path, &mut files).map_err(CorpusError::from)?;
    let mut summaries = Vec::with_capacity(files.len());
    for file in files {
        let format = format.unwrap_or_else(|| detect_format(&file));
        let doc = ingest_document(&file, category, format)?;
        summaries.push(ingest_into(corpus, index, &doc, embedder)?);
    }
    Ok(summaries)
}

fn collect_files(path: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if !path.is_dir() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    let mut entries = std::fs::read_dir(path)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()?;
    entries.sort();
    for entry in entries {
        collect_files(&entry, out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ingest_bytes, DocFormat, SourceCategory};
    use crate::llm_client::STUB_MARKER;

    fn pipeline() -> Pipeline {
        let config = PipelineConfig::default();
        let mut corpus = Corpus::new(config.chunking);
        let mut index = VectorIndex::for_embedder(&config.embedder);
        let doc = ingest_bytes(
            "wiki/inflow.md",
            b"An inflow is defined with the Inflow_External component.",
            SourceCategory::Documentation,
            DocFormat::Markdown,
        )
        .unwrap();
        ingest_into(&mut corpus, &mut index, &doc, &config.embedder).unwrap();
        Pipeline::new(config, Arc::new(corpus), Arc::new(index))
    }

    #[test]
    fn chat_appends_user_and_assistant() {
        let p = pipeline();
        let mut tree = p.new_session();
        let answer = p.chat(&mut tree, "How do I define an inflow?", None).unwrap();
        assert!(answer.response.content.starts_with(STUB_MARKER));
        assert!(answer
            .response
            .content
            .contains("[source: documentation | wiki/inflow.md | chunk 0]"));
        assert_eq!(answer.citations.len(), 1);
        let path = tree.active_path();
        assert_eq!(path.len(), 3);
        assert_eq!(path[2].citations, answer.citations);
    }

    #[test]
    fn failed_turn_leaves_session_untouched() {
        let mut p = pipeline();
        p.config.provider = ProviderConfig {
            retry_max: 0,
            ..ProviderConfig::http("http://127.0.0.1:9")
        };
        let mut tree = p.new_session();
        let before = tree.clone();
        assert!(matches!(
            p.chat(&mut tree, "hello", None),
            Err(PipelineError::Llm(LlmError::Unreachable(_)))
        ));
        assert_eq!(tree, before);
    }

    #[test]
    fn empty_index_answers_without_context() {
        let p = Pipeline::empty(PipelineConfig::default());
        let mut tree = p.new_session();
        let answer = p.chat(&mut tree, "anything", None).unwrap();
        assert!(answer.citations.is_empty());
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = pipeline();
        save_snapshot(&p.corpus, &p.index, dir.path()).unwrap();
        let loaded = Pipeline::load(PipelineConfig::default(), dir.path()).unwrap();
        assert_eq!(*loaded.corpus, *p.corpus);
        assert_eq!(*loaded.index, *p.index);

        let other = PipelineConfig {
            embedder: EmbedderConfig::builtin(64),
            ..PipelineConfig::default()
        };
        assert!(matches!(
            Pipeline::load(other, dir.path()),
            Err(PipelineError::EmbedderMismatch { .. })
        ));
    }
}
