//! Validator-driven repair rounds for generated simulation input files.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{Pipeline, PipelineError};
use crate::retrieval::Citation;
use crate::session::{Role, SessionTree};

pub const FILE_PLACEHOLDER: &str = "{file}";
pub const FEEDBACK_PREAMBLE: &str =
    "The simulation run failed with the following error output. Fix the input model.";
pub const DEFAULT_MAX_ITERATIONS: usize = 3;
/// Captured stdout/stderr keep at most this many trailing bytes.
pub const STREAM_EXCERPT_BYTES: usize = 16 * 1024;

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("the response contains no model text")]
    EmptyModel,
    #[error("invalid validator config: {0}")]
    InvalidConfig(String),
    #[error("validator did not finish within {0:?}")]
    ValidatorTimeout(Duration),
    #[error("could not run validator: {0}")]
    SpawnFailure(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawValidatorConfig", into = "RawValidatorConfig")]
pub struct ValidatorConfig {
    command_template: String,
    pub timeout_s: f64,
    pub success_exit_codes: BTreeSet<i32>,
    /// Parent of the per-run temp directories; the system temp dir if unset.
    pub scratch_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawValidatorConfig {
    command_template: String,
    #[serde(default = "default_timeout")]
    timeout_s: f64,
    #[serde(default = "default_success_codes")]
    success_exit_codes: BTreeSet<i32>,
    #[serde(default)]
    scratch_dir: Option<PathBuf>,
}

fn default_timeout() -> f64 {
    60.0
}

fn default_success_codes() -> BTreeSet<i32> {
    BTreeSet::from([0])
}

impl TryFrom<RawValidatorConfig> for ValidatorConfig {
    type Error = RefineError;

    fn try_from(raw: RawValidatorConfig) -> Result<Self, RefineError> {
        let mut config = ValidatorConfig::new(raw.command_template)?;
        if raw.timeout_s.is_nan() || raw.timeout_s <= 0.0 {
            return Err(RefineError::InvalidConfig("timeout_s must be positive".into()));
        }
        config.timeout_s = raw.timeout_s;
        config.success_exit_codes = raw.success_exit_codes;
        config.scratch_dir = raw.scratch_dir;
        Ok(config)
    }
}

impl From<ValidatorConfig> for RawValidatorConfig {
    fn from(c: ValidatorConfig) -> Self {
        Self {
            command_template: c.command_template,
            timeout_s: c.timeout_s,
            success_exit_codes: c.success_exit_codes,
            scratch_dir: c.scratch_dir,
        }
    }
}

impl ValidatorConfig {
    /// `command_template` is run through `sh -c` with `{file}` replaced by
    /// the quoted path of the model file.
    pub fn new(command_template: impl Into<String>) -> Result<Self, RefineError> {
        let command_template = command_template.into();
        if command_template.matches(FILE_PLACEHOLDER).count() != 1 {
            return Err(RefineError::InvalidConfig(format!(
                "command_template must contain {FILE_PLACEHOLDER} exactly once"
            )));
        }
        Ok(Self {
            command_template,
            timeout_s: default_timeout(),
            success_exit_codes: default_success_codes(),
            scratch_dir: None,
        })
    }

    pub fn command_template(&self) -> &str {
        &self.command_template
    }

    pub fn is_success(&self, exit_code: i32) -> bool {
        self.success_exit_codes.contains(&exit_code)
    }
}

/// Contents of the first fenced code block, or the whole trimmed response.
pub fn extract_model_text(llm_response: &str) -> Result<String, RefineError> {
    static FENCE: OnceLock<Regex> = OnceLock::new();
    let fence = FENCE.get_or_init(|| Regex::new(r"(?s)```[^\n]*\n(.*?)```").unwrap());
    let text = match fence.captures(llm_response) {
        Some(caps) => caps[1].trim().to_string(),
        None => llm_response.trim().to_string(),
    };
    if text.is_empty() {
        return Err(RefineError::EmptyModel);
    }
    Ok(text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationRun {
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Write `model_text` to `model.xml` in a fresh temp directory, run the
/// validator on it and capture both streams.
pub fn validate(model_text: &str, config: &ValidatorConfig) -> Result<ValidationRun, RefineError> {
    let mut builder = tempfile::Builder::new();
    builder.prefix("simrag-validate-");
    let dir = match &config.scratch_dir {
        Some(scratch) => {
            std::fs::create_dir_all(scratch)?;
            builder.tempdir_in(scratch)?
        }
        None => builder.tempdir()?,
    };
    let model_path = dir.path().join("model.xml");
    std::fs::write(&model_path, model_text)?;
    let command = config
        .command_template
        .replace(FILE_PLACEHOLDER, &shell_quote(&model_path));

    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .current_dir(dir.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| RefineError::SpawnFailure(format!("{command}: {e}")))?;
    let stdout = drain(child.stdout.take());
    let stderr = drain(child.stderr.take());

    let timeout = Duration::from_secs_f64(config.timeout_s);
    let started = Instant::now();
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if started.elapsed() >= timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Err(RefineError::ValidatorTimeout(timeout));
        }
        std::thread::sleep(Duration::from_millis(10));
    };
    let stdout = stdout.join().unwrap_or_default();
    let stderr = stderr.join().unwrap_or_default();
    let exit_code = exit_code(status);
    if exit_code == 127 {
        return Err(RefineError::SpawnFailure(format!(
            "{command}: command not found ({})",
            tail_excerpt(&stderr, 512).trim()
        )));
    }
    Ok(ValidationRun {
        exit_code,
        stdout: tail_excerpt(&stdout, STREAM_EXCERPT_BYTES),
        stderr: tail_excerpt(&stderr, STREAM_EXCERPT_BYTES),
    })
}

fn drain<R: Read + Send + 'static>(stream: Option<R>) -> std::thread::JoinHandle<String> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut s) = stream {
            let _ = s.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

#[cfg(unix)]
fn exit_code(status: std::process::ExitStatus) -> i32 {
    use std::os::unix::process::ExitStatusExt;
    status
        .code()
        .unwrap_or_else(|| 128 + status.signal().unwrap_or(0))
}

#[cfg(not(unix))]
fn exit_code(status: std::process::ExitStatus) -> i32 {
    status.code().unwrap_or(-1)
}

fn shell_quote(path: &Path) -> String {
    format!("'{}'", path.to_string_lossy().replace('\'', r"'\''"))
}

/// Last `max_bytes` bytes of `text`, cut forward to a char boundary.
pub fn tail_excerpt(text: &str, max_bytes: usize) -> String {
    if text.len() <= max_bytes {
        return text.to_string();
    }
    let mut start = text.len() - max_bytes;
    while !text.is_char_boundary(start) {
        start += 1;
    }
    text[start..].to_string()
}

pub fn feedback_message(run: &ValidationRun) -> String {
    let output = if run.stderr.trim().is_empty() {
        &run.stdout
    } else {
        &run.stderr
    };
    format!("{FEEDBACK_PREAMBLE}\n\n{}", output.trim_end())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineStatus {
    Valid,
    ExhaustedAttempts,
    ValidatorError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub attempt_text: String,
    /// `None` when the validator could not be run.
    pub exit_code: Option<i32>,
    pub stderr_excerpt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineOutcome {
    pub status: RefineStatus,
    pub iterations_used: usize,
    pub final_text: String,
    pub transcript: Vec<TranscriptEntry>,
}

/// Produces the next assistant reply for a repair prompt.
pub trait RepairModel {
    fn repair(&self, tree: &SessionTree, prompt: &str) -> Result<(String, Vec<Citation>), PipelineError>;
}

impl RepairModel for Pipeline {
    fn repair(&self, tree: &SessionTree, prompt: &str) -> Result<(String, Vec<Citation>), PipelineError> {
        let answer = self.answer(tree, prompt, None)?;
        Ok((answer.response.content, answer.citations))
    }
}

/// Validate the model in `initial_response`; while it fails and rounds are
/// left, feed the validator output back and validate the new reply.
///
/// Each repair round appends one validator-feedback and one assistant
/// message to the active branch of `tree`. A model error aborts the loop
/// and leaves the messages of completed rounds in place.
pub fn refine_loop<M: RepairModel + ?Sized>(
    model: &M,
    tree: &mut SessionTree,
    initial_response: &str,
    validator: &ValidatorConfig,
    max_iterations: usize,
) -> Result<RefineOutcome, RefineError> {
    let mut text = extract_model_text(initial_response)?;
    let mut transcript = Vec::new();
    let mut iterations = 0;

    let status = loop {
        let run = match validate(&text, validator) {
            Ok(run) => run,
            Err(e @ (RefineError::SpawnFailure(_) | RefineError::ValidatorTimeout(_))) => {
                transcript.push(TranscriptEntry {
                    attempt_text: text.clone(),
                    exit_code: None,
                    stderr_excerpt: e.to_string(),
                });
                break RefineStatus::ValidatorError;
            }
            Err(e) => return Err(e),
        };
        transcript.push(TranscriptEntry {
            attempt_text: text.clone(),
            exit_code: Some(run.exit_code),
            stderr_excerpt: run.stderr.clone(),
        });
        if validator.is_success(run.exit_code) {
            break RefineStatus::Valid;
        }
        if iterations >= max_iterations {
            break RefineStatus::ExhaustedAttempts;
        }

        let feedback = feedback_message(&run);
        let (reply, citations) = model.repair(tree, &feedback)?;
        tree.append(Role::ValidatorFeedback, feedback, Vec::new())
            .map_err(PipelineError::from)?;
        tree.append(Role::Assistant, reply.clone(), citations)
            .map_err(PipelineError::from)?;
        iterations += 1;
        text = extract_model_text(&reply).unwrap_or_default();
    };

    Ok(RefineOutcome {
        status,
        iterations_used: iterations,
        final_text: text,
        transcript,
    })
}
