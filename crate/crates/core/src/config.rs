//! `simrag.toml`: one document for the CLI and the service.
//!
//! ```toml
//! bind_address = "127.0.0.1:8787"
//! data_dir = "data"
//! software_name = "Pasimodo"
//! model = "llama3.1:8b"
//!
//! [provider]
//! kind = "http_chat"
//! base_url = "http://127.0.0.1:11434/api"
//!
//! [retrieval]
//! mode = "stratified"
//!
//! [validator]
//! command_template = "pasimodo-check {file}"
//!
//! [refine]
//! max_iterations = 3
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ChunkingConfig;
use crate::index::EmbedderConfig;
use crate::llm_client::ProviderConfig;
use crate::pipeline::PipelineConfig;
use crate::refine::{ValidatorConfig, DEFAULT_MAX_ITERATIONS};
use crate::retrieval::RetrievalConfig;
use crate::session::{BudgetConfig, SystemPromptTemplates};

pub const DEFAULT_BIND_ADDRESS: &str = "127.0.0.1:8787";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineSettings {
    pub max_iterations: usize,
}

impl Default for RefineSettings {
    fn default() -> Self {
        Self {
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    /// Upper bound on cases accepted by one eval run over HTTP.
    pub row_limit: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { row_limit: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimragConfig {
    pub bind_address: String,
    pub data_dir: PathBuf,
    pub software_name: String,
    pub model: String,
    pub focus_system_prompt: bool,
    pub system_prompt_template: Option<String>,
    pub system_prompt_focus_template: Option<String>,
    pub provider: ProviderConfig,
    pub embedder: EmbedderConfig,
    pub chunking: ChunkingConfig,
    pub budget: BudgetConfig,
    pub retrieval: RetrievalConfig,
    pub validator: Option<ValidatorConfig>,
    pub refine: RefineSettings,
    pub eval: EvalSettings,
}

impl Default for SimragConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            bind_address: DEFAULT_BIND_ADDRESS.into(),
            data_dir: PathBuf::from("data"),
            software_name: p.software_name,
            model: p.model,
            focus_system_prompt: p.focus_system_prompt,
            system_prompt_template: None,
            system_prompt_focus_template: None,
            provider: p.provider,
            embedder: p.embedder,
            chunking: p.chunking,
            budget: p.budget,
            retrieval: p.retrieval,
            validator: None,
            refine: RefineSettings::default(),
            eval: EvalSettings::default(),
        }
    }
}

impl SimragConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Parse `path`; relative `data_dir` and `scratch_dir` resolve against
    /// the config file's directory. Environment fallbacks are applied.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if config.data_dir.is_relative() {
            config.data_dir = base.join(&config.data_dir);
        }
        if let Some(v) = config.validator.as_mut() {
            if let Some(dir) = v.scratch_dir.as_mut().filter(|d| d.is_relative()) {
                *dir = base.join(&*dir);
            }
        }
        Ok(config.with_env())
    }

    pub fn with_env(mut self) -> Self {
        self.provider = self.provider.with_env();
        self.embedder = self.embedder.with_env();
        if let Ok(model) = std::env::var(crate::llm_client::LLM_MODEL_ENV) {
            self.model = model;
        }
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.chunking.validate().map_err(|e| invalid(&e))?;
        self.embedder.validate().map_err(|e| invalid(&e))?;
        self.budget.validate().map_err(|e| invalid(&e))?;
        self.retrieval.validate().map_err(|e| invalid(&e))?;
        self.provider.validate().map_err(|e| invalid(&e))?;
        if self.refine.max_iterations == 0 {
            return Err(ConfigError::Invalid(
                "refine.max_iterations must be positive".into(),
            ));
        }
        if self.bind_address.parse::<std::net::SocketAddr>().is_err() {
            return Err(ConfigError::Invalid(format!(
                "bind_address {:?} is not host:port",
                self.bind_address
            )));
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let defaults = SystemPromptTemplates::default();
        PipelineConfig {
            software_name: self.software_name.clone(),
            focus_system_prompt: self.focus_system_prompt,
            templates: SystemPromptTemplates {
                base: self.system_prompt_template.clone().unwrap_or(defaults.base),
                focus: self
                    .system_prompt_focus_template
                    .clone()
                    .unwrap_or(defaults.focus),
            },
            model: self.model.clone(),
            chunking: self.chunking,
            embedder: self.embedder.clone(),
            retrieval: self.retrieval.clone(),
            budget: self.budget,
            provider: self.provider.clone(),
        }
    }
}
