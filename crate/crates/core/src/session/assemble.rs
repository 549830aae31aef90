use serde::{Deserialize, Serialize};

use super::tree::{active_history, ChatMessage, SessionTree};
use super::SessionError;
use crate::corpus::{Corpus, SourceCategory};
use crate::retrieval::{Origin, RetrievalResult};

pub const DEFAULT_BASE_TEMPLATE: &str = "You are an assistant for users of the {software_name} \
simulation software. Answer questions about its components, input files and workflows using \
the context section, which holds excerpts from its documentation, API reference, input \
examples, reports and literature. Each excerpt starts with a [source: ...] header; refer to \
those sources when you use them.";

pub const DEFAULT_FOCUS_TEMPLATE: &str = "Focus on the {software_name} simulation software. \
Your knowledge is limited to the terms of {software_name} provided in the context section. \
State when you are unsure and need more information.";

const PLACEHOLDER: &str = "{software_name}";

/// Text resources for the system prompt; both may be overridden from config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemPromptTemplates {
    pub base: String,
    pub focus: String,
}

impl Default for SystemPromptTemplates {
    fn default() -> Self {
        Self {
            base: DEFAULT_BASE_TEMPLATE.to_string(),
            focus: DEFAULT_FOCUS_TEMPLATE.to_string(),
        }
    }
}

impl SystemPromptTemplates {
    pub fn render(&self, software_name: &str, focus: bool) -> String {
        let mut prompt = self.base.replace(PLACEHOLDER, software_name);
        if focus {
            prompt.push(' ');
            prompt.push_str(&self.focus.replace(PLACEHOLDER, software_name));
        }
        prompt
    }
}

pub fn build_system_prompt(software_name: &str, focus: bool) -> String {
    SystemPromptTemplates::default().render(software_name, focus)
}

/// Conservative, provider-agnostic token estimate: one token per four
/// characters, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BudgetConfig {
    pub max_context_tokens: usize,
    pub history_window: usize,
    pub reserve_for_response: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            max_context_tokens: 8192,
            history_window: 20,
            reserve_for_response: 1024,
        }
    }
}

impl BudgetConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        if self.max_context_tokens == 0 || self.history_window == 0 {
            return Err(SessionError::InvalidBudget(
                "max_context_tokens and history_window must be positive".into(),
            ));
        }
        if self.reserve_for_response >= self.max_context_tokens {
            return Err(SessionError::InvalidBudget(
                "reserve_for_response must be below max_context_tokens".into(),
            ));
        }
        Ok(())
    }

    pub fn prompt_limit(&self) -> usize {
        self.max_context_tokens - self.reserve_for_response
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBlock {
    pub chunk_id: String,
    pub category: SourceCategory,
    pub doc_path: String,
    pub ordinal: usize,
    pub text: String,
    pub score: f64,
    pub origin: Origin,
}

impl ContextBlock {
    pub fn header(&self) -> String {
        format!(
            "[source: {} | {} | chunk {}]",
            self.category, self.doc_path, self.ordinal
        )
    }

    pub fn render(&self) -> String {
        format!("{}\n{}", self.header(), self.text)
    }
}

/// Position of a category in the context section.
fn block_rank(category: SourceCategory) -> usize {
    match category {
        SourceCategory::Documentation => 0,
        SourceCategory::ApiReference => 1,
        SourceCategory::InputExample => 2,
        SourceCategory::ProjectReport => 3,
        SourceCategory::DomainLiterature => 4,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub context_blocks: Vec<ContextBlock>,
    pub history: Vec<ChatMessage>,
    pub user: String,
    /// Sum of [`estimate_tokens`] over the system prompt, each rendered
    /// block, each history message and the user prompt.
    pub estimated_tokens: usize,
}

impl PromptBundle {
    /// System prompt followed by the rendered context section.
    pub fn system_with_context(&self) -> String {
        if self.context_blocks.is_empty() {
            return self.system.clone();
        }
        let blocks: Vec<String> = self.context_blocks.iter().map(ContextBlock::render).collect();
        format!("{}\n\n{}", self.system, blocks.join("\n\n"))
    }

    pub fn count_tokens(system: &str, blocks: &[ContextBlock], history: &[ChatMessage], user: &str) -> usize {
        estimate_tokens(system)
            + blocks.iter().map(|b| estimate_tokens(&b.render())).sum::<usize>()
            + history.iter().map(|m| estimate_tokens(&m.content)).sum::<usize>()
            + estimate_tokens(user)
    }
}

/// Build the prompt for the next turn.
///
/// Over budget, parts are dropped in this order until the estimate fits:
/// oldest history messages, then neighbor blocks from the lowest score up,
/// then direct-hit blocks from the lowest score up. Among equal scores the
/// later-ranked block goes first. The system and user prompts are never
/// dropped.
pub fn assemble_prompt(
    system: &str,
    results: &[RetrievalResult],
    corpus: &Corpus,
    tree: &SessionTree,
    user_prompt: &str,
    budget: &BudgetConfig,
) -> Result<PromptBundle, SessionError> {
    budget.validate()?;
    if user_prompt.trim().is_empty() {
        return Err(SessionError::EmptyPrompt);
    }
    let limit = budget.prompt_limit();
    let fixed = estimate_tokens(system) + estimate_tokens(user_prompt);
    if fixed > limit {
        return Err(SessionError::BudgetImpossible {
            needed: fixed,
            available: limit,
        });
    }

    let mut blocks = Vec::with_capacity(results.len());
    for r in results {
        let chunk = corpus
            .chunk(&r.chunk_id)
            .ok_or_else(|| SessionError::DanglingChunkRef(r.chunk_id.clone()))?;
        let doc = corpus
            .document(&chunk.doc_id)
            .ok_or_else(|| SessionError::DanglingChunkRef(r.chunk_id.clone()))?;
        blocks.push(ContextBlock {
            chunk_id: r.chunk_id.clone(),
            category: r.category,
            doc_path: doc.source_path.clone(),
            ordinal: chunk.ordinal,
            text: chunk.text.clone(),
            score: r.score,
            origin: r.origin.clone(),
        });
    }
    let mut history = active_history(tree, budget.history_window);

    let mut total = PromptBundle::count_tokens(system, &blocks, &history, user_prompt);
    let mut history_dropped = 0;
    while total > limit && history_dropped < history.len() {
        total -= estimate_tokens(&history[history_dropped].content);
        history_dropped += 1;
    }
    history.drain(..history_dropped);

    let mut keep = vec![true; blocks.len()];
    if total > limit {
        for i in block_drop_order(&blocks) {
            if total <= limit {
                break;
            }
            keep[i] = false;
            total -= estimate_tokens(&blocks[i].render());
        }
    }
    let mut kept: Vec<ContextBlock> = blocks
        .into_iter()
        .zip(keep)
        .filter_map(|(b, k)| k.then_some(b))
        .collect();
    kept.sort_by_key(|b| block_rank(b.category));

    Ok(PromptBundle {
        system: system.to_string(),
        context_blocks: kept,
        history,
        user: user_prompt.to_string(),
        estimated_tokens: total,
    })
}

/// Indices of `blocks` in the order they are sacrificed.
fn block_drop_order(blocks: &[ContextBlock]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.sort_by(|&a, &b| {
        let (ba, bb) = (&blocks[a], &blocks[b]);
        let direct_a = ba.origin == Origin::DirectHit;
        let direct_b = bb.origin == Origin::DirectHit;
        direct_a
            .cmp(&direct_b)
            .then_with(|| ba.score.total_cmp(&bb.score))
            .then_with(|| b.cmp(&a))
    });
    order
}
