//! `index.jsonl`: one header record followed by one entry per line.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IndexEntry, IndexError, VectorIndex};
use crate::digest::sha256_hex;

pub const INDEX_FILE: &str = "index.jsonl";
pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    dim: usize,
    provider_digest: String,
    entry_count: usize,
    /// SHA-256 over the entry lines, newline-terminated.
    entries_digest: String,
}

pub fn save_index(index: &VectorIndex, path: &Path) -> Result<(), IndexError> {
    let mut body = Vec::new();
    for entry in index.entries() {
        serde_json::to_writer(&mut body, entry).map_err(std::io::Error::from)?;
        body.push(b'\n');
    }
    let header = Header {
        version: INDEX_FORMAT_VERSION,
        dim: index.dim(),
        provider_digest: index.provider_digest().to_string(),
        entry_count: index.len(),
        entries_digest: sha256_hex(&body),
    };

    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut file = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        serde_json::to_writer(&mut file, &header).map_err(std::io::Error::from)?;
        file.write_all(b"\n")?;
        file.write_all(&body)?;
        file.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<VectorIndex, IndexError> {
    let raw = std::fs::read(path)?;
    let corrupt = |msg: String| IndexError::CorruptIndex(msg);

    let header_end = raw
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| corrupt("missing header line".into()))?;
    let header_value: serde_json::Value =
        serde_json::from_slice(&raw[..header_end]).map_err(|e| corrupt(format!("unreadable header: {e}")))?;
    let version = header_value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| corrupt("header has no version".into()))? as u32;
    if version != INDEX_FORMAT_VERSION {
        return Err(IndexError::VersionMismatch {
            expected: INDEX_FORMAT_VERSION,
            found: version,
        });
    }
    let header: Header =
        serde_json::from_value(header_value).map_err(|e| corrupt(format!("bad header: {e}")))?;

    let body = &raw[header_end + 1..];
    if sha256_hex(body) != header.entries_digest {
        return Err(corrupt("entry digest does not match header".into()));
    }
    let mut index = VectorIndex::new(header.dim, header.provider_digest);
    for line in body.split(|&b| b == b'\n').filter(|l| !l.is_empty()) {
        let entry: IndexEntry =
            serde_json::from_slice(line).map_err(|e| corrupt(format!("bad entry: {e}")))?;
        index.add_entry(entry)?;
    }
    if index.len() != header.entry_count {
        return Err(corrupt(format!(
            "header announces {} entries, file holds {}",
            header.entry_count,
            index.len()
        )));
    }
    Ok(index)
}
