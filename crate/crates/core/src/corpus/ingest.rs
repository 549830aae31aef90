use std::path::Path;

use super::{count_words, CorpusError, DocFormat, Document, SourceCategory};
use crate::digest::sha256_hex;

/// Share of undecodable bytes above which a file is treated as binary.
const MAX_INVALID_BYTE_RATIO: f64 = 0.10;

/// Guess the format from the file extension. Unknown extensions are plain text.
pub fn detect_format(path: &Path) -> DocFormat {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("xml" | "ma" | "xsd" | "pxml") => DocFormat::Xml,
        Some("md" | "markdown") => DocFormat::Markdown,
        _ => DocFormat::PlainText,
    }
}

pub fn ingest_document(
    source_path: &Path,
    category: SourceCategory,
    format: DocFormat,
) -> Result<Document, CorpusError> {
    let bytes = match std::fs::read(source_path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CorpusError::FileNotFound(source_path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    ingest_bytes(&source_path.to_string_lossy(), &bytes, category, format)
}

/// Decode and normalize raw bytes into a [`Document`].
pub fn ingest_bytes(
    source_path: &str,
    bytes: &[u8],
    category: SourceCategory,
    format: DocFormat,
) -> Result<Document, CorpusError> {
    let mut decoded = String::with_capacity(bytes.len());
    let mut invalid_bytes = 0usize;
    let mut replacement_count = 0usize;
    for chunk in bytes.utf8_chunks() {
        decoded.push_str(chunk.valid());
        if !chunk.invalid().is_empty() {
            invalid_bytes += chunk.invalid().len();
            replacement_count += 1;
            decoded.push(char::REPLACEMENT_CHARACTER);
        }
    }
    if !bytes.is_empty() && invalid_bytes as f64 / bytes.len() as f64 > MAX_INVALID_BYTE_RATIO {
        return Err(CorpusError::DecodeFailure {
            path: source_path.to_string(),
            invalid_bytes,
            total_bytes: bytes.len(),
        });
    }
    if replacement_count > 0 {
        tracing::warn!(path = source_path, replacement_count, "lossy UTF-8 decode");
    }

    let content = normalize_line_endings(&decoded);
    let word_count = count_words(&content);
    if word_count == 0 {
        return Err(CorpusError::EmptyDocument(source_path.to_string()));
    }

    let id_material = format!("{source_path}\0{content}");
    let id = sha256_hex(id_material.as_bytes())[..16].to_string();
    Ok(Document {
        id,
        source_path: source_path.to_string(),
        category,
        format,
        content,
        word_count,
        replacement_count,
    })
}

fn normalize_line_endings(text: &str) -> String {
    if !text.contains('\r') {
        return text.to_string();
    }
    text.replace("\r\n", "\n").replace('\r', "\n")
}
