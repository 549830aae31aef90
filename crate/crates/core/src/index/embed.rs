use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbeddingVector, IndexError};
use crate::corpus::words::words;

pub const DEFAULT_HASH_DIM: usize = 256;
pub const EMBED_URL_ENV: &str = "SIMRAG_EMBED_URL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderProvider {
    BuiltinHash,
    RemoteServer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub provider: EmbedderProvider,
    pub dim: usize,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            provider: EmbedderProvider::BuiltinHash,
            dim: DEFAULT_HASH_DIM,
            endpoint: None,
            model_name: None,
        }
    }
}

impl EmbedderConfig {
    pub fn builtin(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), IndexError> {
        if self.dim == 0 {
            return Err(IndexError::InvalidConfig("dim must be positive".into()));
        }
        if self.provider == EmbedderProvider::RemoteServer
            && (self.endpoint.is_none() || self.model_name.is_none())
        {
            return Err(IndexError::InvalidConfig(
                "remote_server embedder requires endpoint and model_name".into(),
            ));
        }
        Ok(())
    }

    /// Fill a missing endpoint from `SIMRAG_EMBED_URL`.
    pub fn with_env(mut self) -> Self {
        if self.endpoint.is_none() {
            self.endpoint = std::env::var(EMBED_URL_ENV).ok();
        }
        self
    }

    /// Identity of the embedding space; indices built under a different
    /// digest are not comparable.
    pub fn digest(&self) -> String {
        crate::digest::json_digest(&(self.provider, self.dim, &self.model_name))
    }
}

pub fn embed_text(text: &str, config: &EmbedderConfig) -> Result<EmbeddingVector, IndexError> {
    match config.provider {
        EmbedderProvider::BuiltinHash => Ok(hash_embedding(text, config.dim)),
        EmbedderProvider::RemoteServer => remote_embedding(text, config),
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

const SIGN_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

/// Bucket and sign a lowercased word contributes to in a `dim`-wide hash
/// embedding.
pub fn hash_slot(word: &str, dim: usize) -> (usize, f32) {
    let bucket = (fnv1a(word.as_bytes(), 0) % dim as u64) as usize;
    let sign = if fnv1a(word.as_bytes(), SIGN_SEED) & 1 == 0 {
        1.0
    } else {
        -1.0
    };
    (bucket, sign)
}

fn hash_embedding(text: &str, dim: usize) -> EmbeddingVector {
    let mut values = vec![0f32; dim];
    for word in words(text) {
        let (bucket, sign) = hash_slot(&word.to_lowercase(), dim);
        values[bucket] += sign;
    }
    EmbeddingVector::normalized(values)
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f32>,
}

fn remote_embedding(text: &str, config: &EmbedderConfig) -> Result<EmbeddingVector, IndexError> {
    config.validate()?;
    let endpoint = config.endpoint.as_deref().unwrap_or_default();
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(60))
        .build()
        .map_err(|e| IndexError::ProviderUnreachable(e.to_string()))?;
    let response = client
        .post(endpoint)
        .json(&EmbedRequest {
            model: config.model_name.as_deref().unwrap_or_default(),
            input: text,
        })
        .send()
        .and_then(|r| r.error_for_status())
        .map_err(|e| IndexError::ProviderUnreachable(e.to_string()))?;
    let body: EmbedResponse = response
        .json()
        .map_err(|e| IndexError::ProviderUnreachable(format!("bad embedding response: {e}")))?;
    if body.embedding.len() != config.dim {
        return Err(IndexError::DimensionMismatch {
            expected: config.dim,
            found: body.embedding.len(),
        });
    }
    Ok(EmbeddingVector::normalized(body.embedding))
}
