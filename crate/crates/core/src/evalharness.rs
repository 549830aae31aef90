//! Six-category prompt suite: loading, deterministic scoring and reports.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{Pipeline, PipelineConfig};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot parse suite {path}: {message}")]
    ParseFailure { path: String, message: String },
    #[error("duplicate case id {0}")]
    DuplicateCaseId(String),
    #[error("case {id}: {message}")]
    BadCategoryMapping { id: String, message: String },
    #[error("run aborted: {0}")]
    AbortedRun(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskCategory {
    TextExtraction,
    StructuredTextExtraction,
    ComponentExplaining,
    ModelSummarization,
    CompositionalReasoning,
    ModelCreation,
}

impl TaskCategory {
    pub const ALL: [TaskCategory; 6] = [
        TaskCategory::TextExtraction,
        TaskCategory::StructuredTextExtraction,
        TaskCategory::ComponentExplaining,
        TaskCategory::ModelSummarization,
        TaskCategory::CompositionalReasoning,
        TaskCategory::ModelCreation,
    ];

    /// 1-based position; the major number of case ids.
    pub fn position(self) -> u32 {
        TaskCategory::ALL.iter().position(|&c| c == self).unwrap() as u32 + 1
    }

    pub fn from_position(position: u32) -> Option<Self> {
        TaskCategory::ALL.get(position.checked_sub(1)? as usize).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            TaskCategory::TextExtraction => "text extraction for question answering",
            TaskCategory::StructuredTextExtraction => "structured text extraction",
            TaskCategory::ComponentExplaining => "component explaining",
            TaskCategory::ModelSummarization => "model summarization",
            TaskCategory::CompositionalReasoning => "compositional reasoning",
            TaskCategory::ModelCreation => "creation of components up to complete models",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCase {
    pub id: String,
    pub category: TaskCategory,
    pub prompt: String,
    #[serde(default)]
    pub required_all: Vec<String>,
    #[serde(default)]
    pub required_any: Vec<Vec<String>>,
    #[serde(default)]
    pub forbidden: Vec<String>,
    #[serde(default)]
    pub min_citations: usize,
    /// Model file appended to the prompt. Relative paths resolve against
    /// the suite file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attach_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

impl EvalCase {
    /// (major, minor) parsed from an id like `3.12`.
    fn id_parts(&self) -> Option<(u32, u32)> {
        let (major, minor) = self.id.split_once('.')?;
        if major.len() != 1 || minor.is_empty() || !minor.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        Some((major.parse().ok()?, minor.parse().ok()?))
    }

    fn check_id(&self) -> Result<(), EvalError> {
        let bad = |message: String| EvalError::BadCategoryMapping {
            id: self.id.clone(),
            message,
        };
        let (major, _) = self
            .id_parts()
            .ok_or_else(|| bad("id must look like <1-6>.<n>".into()))?;
        let expected = TaskCategory::from_position(major)
            .ok_or_else(|| bad(format!("no task category number {major}")))?;
        if expected != self.category {
            return Err(bad(format!(
                "id prefix {major} belongs to {:?}, case says {:?}",
                expected, self.category
            )));
        }
        Ok(())
    }
}

pub fn parse_suite(json: &str, base_dir: &Path, origin: &str) -> Result<Vec<EvalCase>, EvalError> {
    let mut cases: Vec<EvalCase> = serde_json::from_str(json).map_err(|e| EvalError::ParseFailure {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    let mut seen = HashSet::new();
    for case in &mut cases {
        case.check_id()?;
        if !seen.insert(case.id.clone()) {
            return Err(EvalError::DuplicateCaseId(case.id.clone()));
        }
        if let Some(attach) = &case.attach_file {
            if attach.is_relative() {
                case.attach_file = Some(base_dir.join(attach));
            }
        }
    }
    Ok(cases)
}

pub fn load_suite(path: &Path) -> Result<Vec<EvalCase>, EvalError> {
    let json = std::fs::read_to_string(path).map_err(|e| EvalError::ParseFailure {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_suite(&json, base, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Score {
    pub verdict: Verdict,
    pub failed_checks: Vec<String>,
}

/// Case-insensitive substring checks plus a citation floor.
pub fn score_response(case: &EvalCase, response: &str, citation_count: usize) -> Score {
    let haystack = response.to_lowercase();
    let contains = |needle: &str| haystack.contains(&needle.to_lowercase());
    let mut failed = Vec::new();
    for s in &case.required_all {
        if !contains(s) {
            failed.push(format!("missing required \"{s}\""));
        }
    }
    for group in &case.required_any {
        if !group.iter().any(|s| contains(s)) {
            failed.push(format!("missing any of [{}]", group.join(", ")));
        }
    }
    for s in &case.forbidden {
        if contains(s) {
            failed.push(format!("forbidden \"{s}\" present"));
        }
    }
    if citation_count < case.min_citations {
        failed.push(format!("{citation_count} citations, need {}", case.min_citations));
    }
    Score {
        verdict: if failed.is_empty() {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        failed_checks: failed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub id: String,
    pub category: TaskCategory,
    pub verdict: Verdict,
    pub failed_checks: Vec<String>,
    pub citations_seen: usize,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub category: TaskCategory,
    pub passed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_case: Vec<CaseReport>,
    pub per_category: Vec<CategoryScore>,
    pub config_digest: String,
}

impl EvalReport {
    /// Digest of the report with latencies zeroed.
    pub fn digest(&self) -> String {
        let mut stable = self.clone();
        for case in &mut stable.per_case {
            case.latency_ms = 0;
        }
        crate::digest::json_digest(&stable)
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<6} {:<8} {:>5}  failed checks",
            "case", "verdict", "cites"
        );
        for c in &self.per_case {
            let verdict = match c.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "FAIL",
                Verdict::Error => "ERROR",
            };
            let detail = match &c.error {
                Some(e) => e.clone(),
                None => c.failed_checks.join("; "),
            };
            let _ = writeln!(
                out,
                "{:<6} {:<8} {:>5}  {}",
                c.id, verdict, c.citations_seen, detail
            );
        }
        out.push('\n');
        for s in &self.per_category {
            let _ = writeln!(out, "{}: {}/{}", s.category.label(), s.passed, s.total);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Replay all cases in one session instead of a fresh one per case.
    pub chained: bool,
}

fn case_order(case: &EvalCase) -> (u32, u32, String) {
    let (major, minor) = case.id_parts().unwrap_or((u32::MAX, u32::MAX));
    (major, minor, case.id.clone())
}

/// Run every case in id order, single-threaded. When `out` is given the
/// report is written there as JSON, with a text table next to it (`.txt`).
pub fn run_suite(
    cases: &[EvalCase],
    pipeline: &Pipeline,
    options: RunOptions,
    out: Option<&Path>,
) -> Result<EvalReport, EvalError> {
    let mut ordered: Vec<&EvalCase> = cases.iter().collect();
    ordered.sort_by_key(|c| case_order(c));

    let mut chained_session = options.chained.then(|| pipeline.new_session());
    let mut per_case = Vec::with_capacity(ordered.len());
    for case in ordered {
        let started = Instant::now();
        let mut fresh;
        let session = match chained_session.as_mut() {
            Some(s) => s,
            None => {
                fresh = pipeline.new_session();
                &mut fresh
            }
        };
        let outcome = build_prompt(case)
            .and_then(|prompt| pipeline.chat(session, &prompt, None).map_err(|e| e.to_string()));
        let latency_ms = started.elapsed().as_millis() as u64;
        per_case.push(match outcome {
            Ok(answer) => {
                let score = score_response(case, &answer.response.content, answer.citations.len());
                CaseReport {
                    id: case.id.clone(),
                    category: case.category,
                    verdict: score.verdict,
                    failed_checks: score.failed_checks,
                    citations_seen: answer.citations.len(),
                    latency_ms,
                    error: None,
                }
            }
            Err(message) => CaseReport {
                id: case.id.clone(),
                category: case.category,
                verdict: Verdict::Error,
                failed_checks: Vec::new(),
                citations_seen: 0,
                latency_ms,
                error: Some(message),
            },
        });
    }

    let mut tallies: BTreeMap<TaskCategory, (usize, usize)> = BTreeMap::new();
    for c in &per_case {
        let t = tallies.entry(c.category).or_default();
        t.1 += 1;
        if c.verdict == Verdict::Pass {
            t.0 += 1;
        }
    }
    let report = EvalReport {
        per_case,
        per_category: tallies
            .into_iter()
            .map(|(category, (passed, total))| CategoryScore {
                category,
                passed,
                total,
            })
            .collect(),
        config_digest: pipeline.config.digest(),
    };

    if let Some(path) = out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let json = serde_json::to_vec_pretty(&report).map_err(std::io::Error::from)?;
        std::fs::write(path, json)?;
        std::fs::write(path.with_extension("txt"), report.render_table())?;
    }
    Ok(report)
}

/// Load the corpus and index from `data_dir`, then [`run_suite`].
pub fn run_suite_from_dir(
    cases: &[EvalCase],
    config: PipelineConfig,
    data_dir: &Path,
    options: RunOptions,
    out: Option<&Path>,
) -> Result<EvalReport, EvalError> {
    let pipeline = Pipeline::load(config, data_dir).map_err(|e| EvalError::AbortedRun(e.to_string()))?;
    run_suite(cases, &pipeline, options, out)
}

fn build_prompt(case: &EvalCase) -> Result<String, String> {
    match &case.attach_file {
        None => Ok(case.prompt.clone()),
        Some(path) => {
            let model = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read attach_file {}: {e}", path.display()))?;
            Ok(format!("{}\n\n{}", case.prompt, model))
        }
    }
}
