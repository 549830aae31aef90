use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::retrieval::Citation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    ValidatorFeedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub id: String,
    pub role: Role,
    pub content: String,
    #[serde(default)]
    pub citations: Vec<Citation>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionNode {
    pub message: ChatMessage,
    pub parent: Option<String>,
}

/// A conversation whose history can fork at any node. The root holds the
/// system preamble; the path from root to `active_leaf` is what the model
/// sees as history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTree {
    pub session_id: String,
    pub nodes: BTreeMap<String, SessionNode>,
    pub root: String,
    pub active_leaf: String,
}

impl SessionTree {
    pub fn new(system_preamble: impl Into<String>) -> Self {
        Self::with_id(uuid::Uuid::new_v4().simple().to_string(), system_preamble)
    }

    pub fn with_id(session_id: impl Into<String>, system_preamble: impl Into<String>) -> Self {
        let root = node_id(0);
        let message = ChatMessage {
            id: root.clone(),
            role: Role::System,
            content: system_preamble.into(),
            citations: Vec::new(),
            created_at: Utc::now(),
        };
        Self {
            session_id: session_id.into(),
            nodes: BTreeMap::from([(
                root.clone(),
                SessionNode {
                    message,
                    parent: None,
                },
            )]),
            root: root.clone(),
            active_leaf: root,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() <= 1
    }

    pub fn get(&self, node_id: &str) -> Option<&SessionNode> {
        self.nodes.get(node_id)
    }

    /// Append a message under the active leaf and make it the new leaf.
    pub fn append(
        &mut self,
        role: Role,
        content: impl Into<String>,
        citations: Vec<Citation>,
    ) -> Result<String, SessionError> {
        if role == Role::System {
            return Err(SessionError::SystemInHistory);
        }
        let id = node_id(self.next_index());
        let message = ChatMessage {
            id: id.clone(),
            role,
            content: content.into(),
            citations,
            created_at: Utc::now(),
        };
        self.nodes.insert(
            id.clone(),
            SessionNode {
                message,
                parent: Some(self.active_leaf.clone()),
            },
        );
        self.active_leaf = id.clone();
        Ok(id)
    }

    /// Move the active leaf to `node_id`; later appends fork from there.
    pub fn branch(&mut self, node_id: &str) -> Result<(), SessionError> {
        if !self.nodes.contains_key(node_id) {
            return Err(SessionError::UnknownNode(node_id.to_string()));
        }
        self.active_leaf = node_id.to_string();
        Ok(())
    }

    /// Messages from the root to `node_id`, root first.
    pub fn path_to(&self, node_id: &str) -> Result<Vec<&ChatMessage>, SessionError> {
        let mut path = Vec::new();
        let mut cursor = Some(node_id);
        while let Some(id) = cursor {
            let node = self
                .nodes
                .get(id)
                .ok_or_else(|| SessionError::UnknownNode(id.to_string()))?;
            path.push(&node.message);
            if path.len() > self.nodes.len() {
                return Err(SessionError::Corrupt("parent links form a cycle".into()));
            }
            cursor = node.parent.as_deref();
        }
        path.reverse();
        Ok(path)
    }

    pub fn active_path(&self) -> Vec<&ChatMessage> {
        self.path_to(&self.active_leaf).unwrap_or_default()
    }

    pub fn children(&self, node_id: &str) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|(_, n)| n.parent.as_deref() == Some(node_id))
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn leaves(&self) -> Vec<&str> {
        self.nodes
            .keys()
            .filter(|id| self.children(id).is_empty())
            .map(String::as_str)
            .collect()
    }

    /// Structural checks used after deserializing a stored tree.
    pub fn validate(&self) -> Result<(), SessionError> {
        if !self.nodes.contains_key(&self.active_leaf) {
            return Err(SessionError::Corrupt(format!(
                "active leaf {} is not a node",
                self.active_leaf
            )));
        }
        let roots: Vec<_> = self.nodes.iter().filter(|(_, n)| n.parent.is_none()).collect();
        if roots.len() != 1 || roots[0].0 != &self.root {
            return Err(SessionError::Corrupt("tree must have exactly one root".into()));
        }
        for (id, node) in &self.nodes {
            let path = self.path_to(id)?;
            if path[0].id != self.root {
                return Err(SessionError::Corrupt(format!("{id} does not reach the root")));
            }
            if node.parent.is_some() && node.message.role == Role::System {
                return Err(SessionError::SystemInHistory);
            }
        }
        Ok(())
    }

    fn next_index(&self) -> usize {
        self.nodes.len()
    }

    pub fn file_path(dir: &Path, session_id: &str) -> PathBuf {
        dir.join(format!("{session_id}.json"))
    }

    /// Persist as `<dir>/<session_id>.json`.
    pub fn save(&self, dir: &Path) -> Result<(), SessionError> {
        std::fs::create_dir_all(dir)?;
        let path = Self::file_path(dir, &self.session_id);
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(dir: &Path, session_id: &str) -> Result<Self, SessionError> {
        let path = Self::file_path(dir, session_id);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(SessionError::UnknownSession(session_id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        let tree: Self = serde_json::from_slice(&bytes)?;
        tree.validate()?;
        Ok(tree)
    }
}

fn node_id(index: usize) -> String {
    format!("n{index:06}")
}

/// Root-to-leaf path without system messages, keeping the last `window`.
pub fn active_history(tree: &SessionTree, window: usize) -> Vec<ChatMessage> {
    let history: Vec<&ChatMessage> = tree
        .active_path()
        .into_iter()
        .filter(|m| m.role != Role::System)
        .collect();
    let skip = history.len().saturating_sub(window);
    history.into_iter().skip(skip).cloned().collect()
}
