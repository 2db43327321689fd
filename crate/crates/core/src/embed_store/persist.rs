//! On-disk store layout: `manifest.json` plus one JSON record per line in
//! `records.jsonl`. Floats are written in shortest round-trip form, so a
//! loaded store ranks queries exactly like the original.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{l2_norm, EmbeddingRecord, Source, StoreError, VectorStore, NORM_TOLERANCE};

pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const RECORDS: &str = "records.jsonl";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    source: Source,
    dim: usize,
    provider_fingerprint: String,
    record_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordLine {
    chunk_id: String,
    metadata: BTreeMap<String, String>,
    body: String,
    vector: Vec<f64>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the store under `dir`, replacing any store already there.
pub fn persist_store(store: &VectorStore, dir: &Path) -> Result<(), StoreError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    let records_path = dir.join(RECORDS);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        for r in store.records() {
            let line = RecordLine {
                chunk_id: r.chunk_id.clone(),
                metadata: r.metadata.clone(),
                body: r.body.clone(),
                vector: r.vector.clone(),
            };
            serde_json::to_writer(&mut w, &line).map_err(|e| io_err(&records_path)(e.into()))?;
            w.write_all(b"\n").map_err(io_err(&records_path))?;
        }
        w.flush().map_err(io_err(&records_path))?;
    }
    tmp.persist(&records_path)
        .map_err(|e| io_err(&records_path)(e.error))?;

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        source: store.source(),
        dim: store.dim(),
        provider_fingerprint: store.provider_fingerprint().to_string(),
        record_count: store.len(),
    };
    let manifest_path = dir.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(text.as_bytes())
        .map_err(io_err(&manifest_path))?;
    tmp.persist(&manifest_path)
        .map_err(|e| io_err(&manifest_path)(e.error))?;
    Ok(())
}

/// Reads a store written by [`persist_store`].
pub fn load_store(dir: &Path) -> Result<VectorStore, StoreError> {
    let manifest_path = dir.join(MANIFEST);
    if !manifest_path.is_file() {
        return Err(StoreError::ManifestMissing(dir.to_path_buf()));
    }
    let text = std::fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| StoreError::CorruptManifest(e.to_string()))?;
    let version = raw.get("format_version").and_then(|v| v.as_u64());
    if version != Some(u64::from(FORMAT_VERSION)) {
        return Err(StoreError::VersionUnsupported(version.unwrap_or(0) as u32));
    }
    let manifest: Manifest =
        serde_json::from_value(raw).map_err(|e| StoreError::CorruptManifest(e.to_string()))?;

    let records_path = dir.join(RECORDS);
    let file = std::fs::File::open(&records_path).map_err(io_err(&records_path))?;
    let mut records = Vec::with_capacity(manifest.record_count);
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err(&records_path))?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |reason: String| StoreError::CorruptRecord {
            line: line_no,
            reason,
        };
        let rec: RecordLine = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        if rec.vector.len() != manifest.dim {
            return Err(corrupt(format!(
                "vector has {} values, manifest says {}",
                rec.vector.len(),
                manifest.dim
            )));
        }
        let norm = l2_norm(&rec.vector);
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(corrupt(format!("vector norm {norm} is not 1")));
        }
        records.push(EmbeddingRecord {
            chunk_id: rec.chunk_id,
            source: manifest.source,
            vector: rec.vector,
            metadata: rec.metadata,
            body: rec.body,
        });
    }
    if records.len() != manifest.record_count {
        return Err(StoreError::CorruptRecord {
            line: records.len() + 1,
            reason: format!(
                "manifest lists {} records, found {}",
                manifest.record_count,
                records.len()
            ),
        });
    }
    VectorStore::from_records(
        manifest.source,
        manifest.dim,
        manifest.provider_fingerprint,
        records,
    )
}

/// Loads a store and refuses it if a different embedder built it.
pub fn load_store_expecting(dir: &Path, fingerprint: &str) -> Result<VectorStore, StoreError> {
    let store = load_store(dir)?;
    store.check_fingerprint(fingerprint)?;
    Ok(store)
}
