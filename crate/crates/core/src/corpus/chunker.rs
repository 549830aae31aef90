use serde::{Deserialize, Serialize};

use super::words::word_spans;
use super::{chunk_id, Chunk, CorpusError, DocFormat, Document};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkingConfig {
    pub chunk_words: usize,
    pub overlap_words: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            chunk_words: 512,
            overlap_words: 64,
        }
    }
}

impl ChunkingConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.chunk_words == 0 || self.overlap_words >= self.chunk_words {
            return Err(CorpusError::InvalidConfig {
                chunk: self.chunk_words,
                overlap: self.overlap_words,
            });
        }
        Ok(())
    }
}

/// Split a document into overlapping word windows.
///
/// Chunk boundaries always fall on word starts: a chunk owns the delimiters
/// that trail its last word, the first chunk starts at byte 0 and the last
/// one runs to the end of the content. For XML the cut is pulled back to
/// the latest word ending in `>` inside the trailing quarter of the window,
/// so elements are not cut in half when avoidable.
pub fn split_into_chunks(doc: &Document, config: ChunkingConfig) -> Result<Vec<Chunk>, CorpusError> {
    config.validate()?;
    let content = doc.content.as_str();
    let spans: Vec<_> = word_spans(content).collect();
    let n = spans.len();
    if n == 0 {
        return Ok(Vec::new());
    }

    let mut chunks: Vec<Chunk> = Vec::new();
    let mut start = 0usize;
    loop {
        let ordinal = chunks.len();
        let mut end = (start + config.chunk_words).min(n);
        if end < n && doc.format == DocFormat::Xml {
            let len = end - start;
            let earliest = (start + len - len / 4).max(start + config.overlap_words + 1);
            if let Some(cut) = (earliest..=end)
                .rev()
                .find(|&cut| content[spans[cut - 1].clone()].ends_with('>'))
            {
                end = cut;
            }
        }

        let from = if ordinal == 0 { 0 } else { spans[start].start };
        let to = if end == n { content.len() } else { spans[end].start };
        chunks.push(Chunk {
            id: chunk_id(&doc.id, ordinal),
            doc_id: doc.id.clone(),
            ordinal,
            text: content[from..to].to_string(),
            word_count: end - start,
            overlap_words: if ordinal == 0 { 0 } else { config.overlap_words },
            prev: None,
            next: None,
        });

        if end == n {
            break;
        }
        start = end - config.overlap_words;
    }

    link_neighbors(&mut chunks);
    Ok(chunks)
}

fn link_neighbors(chunks: &mut [Chunk]) {
    let ids: Vec<String> = chunks.iter().map(|c| c.id.clone()).collect();
    for (i, chunk) in chunks.iter_mut().enumerate() {
        chunk.prev = i.checked_sub(1).map(|p| ids[p].clone());
        chunk.next = ids.get(i + 1).cloned();
    }
}

/// Rebuild document text from its chunks, dropping each chunk's leading
/// overlap words.
pub fn reassemble(chunks: &[Chunk]) -> Result<String, CorpusError> {
    let mut ordered: Vec<&Chunk> = chunks.iter().collect();
    ordered.sort_by_key(|c| c.ordinal);
    if ordered.is_empty() {
        return Err(CorpusError::IncompleteChunkSet(0));
    }
    let doc_id = &ordered[0].doc_id;
    for (expected, chunk) in ordered.iter().enumerate() {
        if &chunk.doc_id != doc_id {
            return Err(CorpusError::MixedDocuments);
        }
        if chunk.ordinal != expected {
            return Err(CorpusError::IncompleteChunkSet(expected));
        }
    }
    if ordered.last().is_some_and(|c| c.next.is_some()) {
        return Err(CorpusError::IncompleteChunkSet(ordered.len()));
    }

    let mut out = String::new();
    for chunk in ordered {
        if chunk.ordinal == 0 || chunk.overlap_words == 0 {
            out.push_str(&chunk.text);
            continue;
        }
        if let Some(span) = word_spans(&chunk.text).nth(chunk.overlap_words) {
            out.push_str(&chunk.text[span.start..]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::words::words;
    use crate::corpus::{count_words, ingest_bytes, SourceCategory};

    fn doc(text: &str, format: DocFormat) -> Document {
        ingest_bytes("t", text.as_bytes(), SourceCategory::Documentation, format).unwrap()
    }

    fn cfg(chunk_words: usize, overlap_words: usize) -> ChunkingConfig {
        ChunkingConfig {
            chunk_words,
            overlap_words,
        }
    }

    #[test]
    fn small_document_is_one_chunk() {
        let d = doc(
            "one two three four five six seven eight nine ten",
            DocFormat::PlainText,
        );
        let chunks = split_into_chunks(&d, cfg(512, 64)).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text, d.content);
        assert_eq!(chunks[0].prev, None);
        assert_eq!(chunks[0].next, None);
    }

    #[test]
    fn overlap_must_be_smaller_than_chunk() {
        let d = doc("a b c", DocFormat::PlainText);
        assert!(matches!(
            split_into_chunks(&d, cfg(8, 8)),
            Err(CorpusError::InvalidConfig { .. })
        ));
        assert!(split_into_chunks(&d, cfg(0, 0)).is_err());
    }

    #[test]
    fn consecutive_chunks_share_overlap_words() {
        let text: String = (0..100).map(|i| format!("w{i} ")).collect();
        let d = doc(&text, DocFormat::PlainText);
        let chunks = split_into_chunks(&d, cfg(30, 5)).unwrap();
        for pair in chunks.windows(2) {
            let prev: Vec<_> = words(&pair[0].text).collect();
            let next: Vec<_> = words(&pair[1].text).collect();
            assert_eq!(prev[prev.len() - 5..], next[..5]);
        }
        assert!(chunks.iter().all(|c| c.word_count <= 30));
        assert!(chunks.iter().all(|c| c.word_count == count_words(&c.text)));
    }

    #[test]
    fn neighbor_links_follow_ordinals() {
        let text = "x ".repeat(50);
        let chunks = split_into_chunks(&doc(&text, DocFormat::PlainText), cfg(10, 2)).unwrap();
        for (i, c) in chunks.iter().enumerate() {
            assert_eq!(c.ordinal, i);
            if let Some(next) = &c.next {
                assert_eq!(chunks[i + 1].id, *next);
                assert_eq!(chunks[i + 1].prev.as_ref(), Some(&c.id));
            }
        }
    }

    #[test]
    fn xml_cut_snaps_to_element_end() {
        // 9-word window ends inside <B ...>; `</A>` closes at word 8, so the
        // cut moves back by one word.
        let text = "<A x=\"1\"> a b c </A> <B y=\"2\"> d e f </B>";
        let d = doc(text, DocFormat::Xml);
        let chunks = split_into_chunks(&d, cfg(9, 0)).unwrap();
        assert_eq!(chunks[0].word_count, 8);
        assert_eq!(chunks[0].text, "<A x=\"1\"> a b c </A> ");
        assert_eq!(reassemble(&chunks).unwrap(), d.content);
    }

    #[test]
    fn xml_without_nearby_boundary_uses_word_cut() {
        let text = "<A> a b c d e f g h i j k l m n o p </A>";
        let d = doc(text, DocFormat::Xml);
        let chunks = split_into_chunks(&d, cfg(8, 0)).unwrap();
        assert_eq!(chunks[0].word_count, 8);
    }

    #[test]
    fn reassemble_detects_missing_ordinal() {
        let text = "w ".repeat(30);
        let mut chunks = split_into_chunks(&doc(&text, DocFormat::PlainText), cfg(10, 0)).unwrap();
        assert_eq!(chunks.len(), 3);
        chunks.remove(1);
        assert!(matches!(
            reassemble(&chunks),
            Err(CorpusError::IncompleteChunkSet(1))
        ));
    }

    #[test]
    fn reassemble_detects_missing_tail() {
        let text = "w ".repeat(30);
        let mut chunks = split_into_chunks(&doc(&text, DocFormat::PlainText), cfg(10, 0)).unwrap();
        chunks.pop();
        assert!(matches!(
            reassemble(&chunks),
            Err(CorpusError::IncompleteChunkSet(2))
        ));
    }

    #[test]
    fn single_chunk_reassembles_identically() {
        let d = doc("  leading = and/trailing  ", DocFormat::PlainText);
        let chunks = split_into_chunks(&d, cfg(512, 64)).unwrap();
        assert_eq!(reassemble(&chunks).unwrap(), d.content);
    }
}
