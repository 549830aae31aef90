use std::collections::BTreeSet;

use proptest::prelude::*;
use simrag_core::corpus::{
    ingest_bytes, reassemble, split_into_chunks, words, ChunkingConfig, Corpus, DocFormat, SourceCategory,
};
use simrag_core::index::{load_index, save_index, EmbeddingVector, IndexEntry, SearchHit, VectorIndex};
use simrag_core::retrieval::{Origin, RetrievalResult};
use simrag_core::session::{assemble_prompt, estimate_tokens, BudgetConfig, Role, SessionError, SessionTree};

const VOCAB: &[&str] = &[
    "<Particle",
    "id=\"p1\"",
    "/>",
    "mass",
    "value",
    "0.5",
    "</Sensor>",
    "SPH",
    "dem",
    "ü",
];
const DELIMS: &[&str] = &[" ", "\n", "\t", "=", "/", "  ", "\r\n", " / "];

fn document_text() -> impl Strategy<Value = String> {
    (
        prop::collection::vec((0..VOCAB.len(), 0..DELIMS.len()), 1..400),
        prop::bool::ANY,
    )
        .prop_map(|(parts, leading)| {
            let mut s = String::new();
            if leading {
                s.push_str("\n ");
            }
            for (w, d) in parts {
                s.push_str(VOCAB[w]);
                s.push_str(DELIMS[d]);
            }
            s
        })
}

fn chunking() -> impl Strategy<Value = ChunkingConfig> {
    (1usize..80).prop_flat_map(|chunk_words| {
        (0..chunk_words).prop_map(move |overlap_words| ChunkingConfig {
            chunk_words,
            overlap_words,
        })
    })
}

proptest! {
    #[test]
    fn chunks_reassemble_to_the_document(text in document_text(), config in chunking()) {
        let doc = ingest_bytes("doc.xml", text.as_bytes(), SourceCategory::InputExample, DocFormat::Xml).unwrap();
        let chunks = split_into_chunks(&doc, config).unwrap();
        prop_assert_eq!(reassemble(&chunks).unwrap(), doc.content.clone());

        let mut stitched = Vec::new();
        for (i, c) in chunks.iter().enumerate() {
            prop_assert_eq!(c.ordinal, i);
            prop_assert!(c.word_count >= 1 && c.word_count <= config.chunk_words);
            prop_assert_eq!(c.word_count, words::count_words(&c.text));
            let ws: Vec<&str> = words::words(&c.text).collect();
            stitched.extend_from_slice(&ws[c.overlap_words..]);
        }
        let expected: Vec<&str> = words::words(&doc.content).collect();
        prop_assert_eq!(stitched, expected);
    }

    #[test]
    fn chunking_is_deterministic(text in document_text(), config in chunking()) {
        let a = ingest_bytes("d.md", text.as_bytes(), SourceCategory::Documentation, DocFormat::Markdown).unwrap();
        let b = ingest_bytes("d.md", text.as_bytes(), SourceCategory::Documentation, DocFormat::Markdown).unwrap();
        prop_assert_eq!(a.content_digest(), b.content_digest());
        prop_assert_eq!(split_into_chunks(&a, config).unwrap(), split_into_chunks(&b, config).unwrap());
    }
}

fn brute_force(
    index: &VectorIndex,
    query: &EmbeddingVector,
    k: usize,
    filter: Option<SourceCategory>,
) -> Vec<SearchHit> {
    let mut all: Vec<SearchHit> = index
        .entries()
        .filter(|e| filter.is_none_or(|c| c == e.category))
        .map(|e| SearchHit {
            chunk_id: e.chunk_id.clone(),
            score: query
                .values()
                .iter()
                .zip(e.vector.values())
                .map(|(&a, &b)| a as f64 * b as f64)
                .sum(),
        })
        .collect();
    all.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.chunk_id.cmp(&b.chunk_id))
    });
    all.truncate(k);
    all
}

fn small_vector(dim: usize) -> impl Strategy<Value = EmbeddingVector> {
    // Few distinct component values so exact score ties are common.
    prop::collection::vec(-2i8..=2, dim)
        .prop_map(|v| EmbeddingVector::from_raw(v.into_iter().map(|x| x as f32 * 0.5).collect()))
}

fn index_strategy() -> impl Strategy<Value = VectorIndex> {
    prop::collection::vec((small_vector(8), 0..SourceCategory::ALL.len()), 0..60).prop_map(|entries| {
        let mut index = VectorIndex::new(8, "test");
        for (i, (vector, c)) in entries.into_iter().enumerate() {
            index
                .add_entry(IndexEntry {
                    chunk_id: format!("doc{}#{:05}", i % 7, i),
                    category: SourceCategory::ALL[c],
                    vector,
                })
                .unwrap();
        }
        index
    })
}

proptest! {
    #[test]
    fn search_matches_brute_force(
        index in index_strategy(),
        query in small_vector(8),
        k in 0usize..20,
        filter in prop::option::of(0..SourceCategory::ALL.len()),
    ) {
        let filter = filter.map(|c| SourceCategory::ALL[c]);
        let hits = index.search(&query, k, filter).unwrap();
        prop_assert_eq!(hits, brute_force(&index, &query, k, filter));
    }

    #[test]
    fn index_file_round_trip(index in index_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.jsonl");
        save_index(&index, &path).unwrap();
        prop_assert_eq!(load_index(&path).unwrap(), index);
    }
}

fn fixture_corpus() -> Corpus {
    let mut corpus = Corpus::new(ChunkingConfig {
        chunk_words: 20,
        overlap_words: 4,
    });
    for (i, category) in SourceCategory::ALL.iter().enumerate() {
        let text: String = (0..90).map(|w| format!("w{i}_{w} ")).collect();
        let doc = ingest_bytes(
            &format!("docs/{i}.txt"),
            text.as_bytes(),
            *category,
            DocFormat::PlainText,
        )
        .unwrap();
        corpus.add_document(&doc).unwrap();
    }
    corpus
}

#[derive(Debug, Clone)]
struct BudgetCase {
    picks: Vec<(usize, bool, u8)>,
    history: Vec<usize>,
    system_len: usize,
    user_len: usize,
    budget: BudgetConfig,
}

fn budget_case(chunk_total: usize) -> impl Strategy<Value = BudgetCase> {
    (
        prop::collection::vec((0..chunk_total, prop::bool::ANY, 0u8..5), 0..12),
        prop::collection::vec(0usize..600, 0..40),
        0usize..800,
        1usize..800,
        (64usize..3000, 1usize..30, 0usize..400),
    )
        .prop_map(
            |(picks, history, system_len, user_len, (max, window, reserve))| BudgetCase {
                picks,
                history,
                system_len,
                user_len,
                budget: BudgetConfig {
                    max_context_tokens: max,
                    history_window: window,
                    reserve_for_response: reserve.min(max - 1),
                },
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn assembly_respects_the_budget(case in budget_case(fixture_corpus().chunk_count())) {
        let corpus = fixture_corpus();
        let ids: Vec<String> = corpus.chunks().map(|c| c.id.clone()).collect();
        let mut seen = BTreeSet::new();
        let results: Vec<RetrievalResult> = case
            .picks
            .iter()
            .filter(|(i, _, _)| seen.insert(*i))
            .map(|&(i, direct, score)| RetrievalResult {
                chunk_id: ids[i].clone(),
                score: score as f64 / 4.0,
                category: corpus.category_of(&ids[i]).unwrap(),
                origin: if direct { Origin::DirectHit } else { Origin::NeighborOf(ids[0].clone()) },
            })
            .collect();
        let mut tree = SessionTree::new("s".repeat(case.system_len));
        for (i, len) in case.history.iter().enumerate() {
            let role = if i % 2 == 0 { Role::User } else { Role::Assistant };
            tree.append(role, "h".repeat(*len), Vec::new()).unwrap();
        }
        let system = "s".repeat(case.system_len);
        let user = "u".repeat(case.user_len);
        let limit = case.budget.max_context_tokens - case.budget.reserve_for_response;

        match assemble_prompt(&system, &results, &corpus, &tree, &user, &case.budget) {
            Ok(bundle) => {
                prop_assert!(bundle.estimated_tokens <= limit);
                prop_assert!(bundle.history.len() <= case.budget.history_window);
                let kept: BTreeSet<&str> = bundle.context_blocks.iter().map(|b| b.chunk_id.as_str()).collect();
                let dropped_direct = results.iter().any(|r| r.is_direct() && !kept.contains(r.chunk_id.as_str()));
                let dropped_neighbor = results.iter().any(|r| !r.is_direct() && !kept.contains(r.chunk_id.as_str()));
                if dropped_direct || dropped_neighbor {
                    prop_assert!(bundle.history.is_empty());
                }
                if dropped_direct {
                    prop_assert!(bundle.context_blocks.iter().all(|b| b.origin == Origin::DirectHit));
                }
            }
            Err(SessionError::BudgetImpossible { needed, available }) => {
                prop_assert_eq!(available, limit);
                prop_assert!(needed > limit);
                prop_assert_eq!(needed, estimate_tokens(&system) + estimate_tokens(&user));
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Append(bool),
    Branch(usize),
}

proptest! {
    #[test]
    fn session_tree_operations(ops in prop::collection::vec(
        prop_oneof![prop::bool::ANY.prop_map(Op::Append), (0usize..50).prop_map(Op::Branch)],
        0..60,
    )) {
        let mut tree = SessionTree::new("system");
        for op in ops {
            match op {
                Op::Append(user) => {
                    let before = tree.active_path().len();
                    let role = if user { Role::User } else { Role::Assistant };
                    let id = tree.append(role, "m", Vec::new()).unwrap();
                    prop_assert_eq!(&tree.active_leaf, &id);
                    prop_assert_eq!(tree.active_path().len(), before + 1);
                }
                Op::Branch(i) => {
                    let ids: Vec<String> = tree.nodes.keys().cloned().collect();
                    let target = ids[i % ids.len()].clone();
                    let nodes_before = tree.len();
                    tree.branch(&target).unwrap();
                    prop_assert_eq!(tree.len(), nodes_before);
                    prop_assert_eq!(&tree.active_path().last().unwrap().id, &target);
                }
            }
            tree.validate().unwrap();
            let path = tree.active_path();
            prop_assert_eq!(path[0].role, Role::System);
            prop_assert!(path[1..].iter().all(|m| m.role != Role::System));
        }
        let dir = tempfile::tempdir().unwrap();
        tree.save(dir.path()).unwrap();
        prop_assert_eq!(SessionTree::load(dir.path(), &tree.session_id).unwrap(), tree);
    }
}
