//! Retrieval-augmented generation for closed-source simulation software.
//!
//! The crate covers the whole request path: ingesting markup-heavy
//! documentation into neighbor-linked chunks ([`corpus`]), exact cosine
//! search over hashed or server-provided embeddings ([`index`]),
//! category-stratified retrieval with neighbor expansion ([`retrieval`]),
//! branching chat sessions and budget-bounded prompt assembly
//! ([`session`]), a small HTTP chat client ([`llm_client`]), validator
//! driven repair rounds ([`refine`]) and a prompt-suite harness
//! ([`evalharness`]). [`pipeline`] wires them together.

pub mod config;
pub mod corpus;
pub mod digest;
pub mod evalharness;
pub mod index;
pub mod llm_client;
pub mod pipeline;
pub mod refine;
pub mod retrieval;
pub mod session;

pub use corpus::{Chunk, Corpus, DocFormat, Document, SourceCategory};
