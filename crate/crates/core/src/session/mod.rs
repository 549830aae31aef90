//! Branching chat sessions, the system prompt, and budget-bounded prompt
//! assembly.

mod assemble;
mod tree;

use thiserror::Error;

pub use assemble::{
    assemble_prompt, build_system_prompt, estimate_tokens, BudgetConfig, ContextBlock, PromptBundle,
    SystemPromptTemplates, DEFAULT_BASE_TEMPLATE, DEFAULT_FOCUS_TEMPLATE,
};
pub use tree::{active_history, ChatMessage, Role, SessionNode, SessionTree};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("system messages may only appear as the root preamble")]
    SystemInHistory,
    #[error("system prompt and user prompt alone need {needed} tokens, budget allows {available}")]
    BudgetImpossible { needed: usize, available: usize },
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error("the user prompt is empty")]
    EmptyPrompt,
    #[error("context references unknown chunk {0}")]
    DanglingChunkRef(String),
    #[error("corrupt session: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
