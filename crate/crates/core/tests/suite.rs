use std::path::{Path, PathBuf};
use std::sync::Arc;

use simrag_core::corpus::{Corpus, SourceCategory};
use simrag_core::evalharness::{
    load_suite, run_suite, score_response, EvalCase, RunOptions, TaskCategory, Verdict,
};
use simrag_core::index::VectorIndex;
use simrag_core::pipeline::{ingest_path, Pipeline, PipelineConfig};

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture_pipeline() -> Pipeline {
    let config = PipelineConfig::default();
    let mut corpus = Corpus::new(config.chunking);
    let mut index = VectorIndex::for_embedder(&config.embedder);
    for category in SourceCategory::ALL {
        let dir = repo().join("fixtures/corpus").join(category.as_str());
        ingest_path(&mut corpus, &mut index, &dir, category, None, &config.embedder).unwrap();
    }
    Pipeline::new(config, Arc::new(corpus), Arc::new(index))
}

#[test]
fn bundled_suite_shape() {
    let cases = load_suite(&repo().join("suites/table4.json")).unwrap();
    assert_eq!(cases.len(), 28);
    let sizes: Vec<usize> = TaskCategory::ALL
        .iter()
        .map(|c| cases.iter().filter(|case| case.category == *c).count())
        .collect();
    assert_eq!(sizes, [6, 6, 4, 5, 5, 2]);
    for case in &cases {
        if let Some(path) = &case.attach_file {
            assert!(path.is_file(), "{} attaches missing {}", case.id, path.display());
        }
    }
    let chain = load_suite(&repo().join("suites/history-chain.json")).unwrap();
    let ids: Vec<&str> = chain.iter().map(|c| c.id.as_str()).collect();
    assert_eq!(ids, ["1.1", "1.2", "1.3", "1.5", "2.1", "5.4"]);
}

#[test]
fn stub_runs_are_reproducible() {
    let cases = load_suite(&repo().join("suites/table4.json")).unwrap();
    let pipeline = fixture_pipeline();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let a = run_suite(&cases, &pipeline, RunOptions::default(), Some(&out)).unwrap();
    let b = run_suite(&cases, &pipeline, RunOptions::default(), None).unwrap();
    assert_eq!(a.digest(), b.digest());
    assert_eq!(a.per_case.len(), 28);
    assert!(a.per_case.iter().all(|c| c.verdict != Verdict::Error));
    let totals: Vec<usize> = a.per_category.iter().map(|c| c.total).collect();
    assert_eq!(totals, [6, 6, 4, 5, 5, 2]);
    assert!(a.per_category.iter().all(|c| c.passed <= c.total));

    let table = std::fs::read_to_string(out.with_extension("txt")).unwrap();
    for score in &a.per_category {
        assert!(table.contains(&format!(
            "{}: {}/{}",
            score.category.label(),
            score.passed,
            score.total
        )));
    }
    let written: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(written["per_case"].as_array().unwrap().len(), 28);
}

#[test]
fn chained_run_shares_one_session() {
    let cases = load_suite(&repo().join("suites/history-chain.json")).unwrap();
    let pipeline = fixture_pipeline();
    let report = run_suite(&cases, &pipeline, RunOptions { chained: true }, None).unwrap();
    assert_eq!(report.per_case.len(), 6);
}

#[test]
fn missing_attachment_is_isolated() {
    let mut cases = load_suite(&repo().join("suites/table4.json")).unwrap();
    let target = cases.iter_mut().find(|c| c.id == "4.1").unwrap();
    target.attach_file = Some(repo().join("fixtures/models/does_not_exist.xml"));
    let pipeline = fixture_pipeline();
    let broken = run_suite(&cases, &pipeline, RunOptions::default(), None).unwrap();
    let clean = run_suite(
        &load_suite(&repo().join("suites/table4.json")).unwrap(),
        &pipeline,
        RunOptions::default(),
        None,
    )
    .unwrap();
    for (b, c) in broken.per_case.iter().zip(&clean.per_case) {
        if b.id == "4.1" {
            assert_eq!(b.verdict, Verdict::Error);
            assert!(b.error.as_deref().unwrap().contains("does_not_exist.xml"));
        } else {
            assert_eq!(b.verdict, c.verdict, "case {}", b.id);
        }
    }
}

#[test]
fn empty_suite_gives_empty_report() {
    let report = run_suite(&[], &fixture_pipeline(), RunOptions::default(), None).unwrap();
    assert!(report.per_case.is_empty());
    assert!(report.per_category.is_empty());
}

#[test]
fn influx_regression_case() {
    let cases = load_suite(&repo().join("suites/table4.json")).unwrap();
    let case: &EvalCase = cases.iter().find(|c| c.id == "6.1").unwrap();
    let wrong = "<Inflow_External name=\"inlet\" Velocity=\"1 0 0\"/>";
    let right = "<Influx_External name=\"inlet\" Velocity=\"1 0 0\"/>";
    let citations = case.min_citations;
    assert_eq!(score_response(case, wrong, citations).verdict, Verdict::Fail);
    assert_eq!(score_response(case, right, citations).verdict, Verdict::Pass);
}
