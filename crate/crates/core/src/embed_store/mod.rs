//! Embedding providers and the paper/code vector stores.
//!
//! Stores are exact: search is a brute-force cosine ranking over every
//! record, ties broken by ascending chunk id.

mod hashing;
mod persist;
mod remote;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use async_trait::async_trait;
use futures::{StreamExt, TryStreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hashing::{fnv1a64, FeatureHashEmbedder, DEFAULT_DIM};
pub use persist::{load_store, load_store_expecting, persist_store, FORMAT_VERSION};
pub use remote::RemoteEmbedder;

pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("text #{index} is empty")]
    EmptyText { index: usize },
    #[error("embedding provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("embedding provider rejected the request: {0}")]
    ProviderRejected(String),
    #[error("embedding has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("malformed embedding response: {0}")]
    MalformedResponse(String),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("embedding chunk `{chunk_id}` failed: {source}")]
    Embed {
        chunk_id: String,
        #[source]
        source: EmbedError,
    },
    #[error("no chunks to store")]
    EmptyInput,
    #[error("duplicate chunk id `{0}`")]
    DuplicateChunkId(String),
    #[error("query has dimension {found}, store has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("store manifest missing at {0}")]
    ManifestMissing(std::path::PathBuf),
    #[error("unreadable store manifest: {0}")]
    CorruptManifest(String),
    #[error("store format version {0} is not supported (expected {FORMAT_VERSION})")]
    VersionUnsupported(u32),
    #[error("corrupt record on line {line}: {reason}")]
    CorruptRecord { line: usize, reason: String },
    #[error("store was built by `{found}` but the configured embedder is `{expected}`")]
    FingerprintMismatch { expected: String, found: String },
    #[error("store I/O error at {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Paper,
    Code,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Paper => "paper",
            Self::Code => "code",
        }
    }
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Something that turns texts into fixed-length vectors.
#[async_trait]
pub trait EmbeddingProvider: Send + Sync {
    /// Identifies the embedder (name, dimension, version). Stores built by
    /// different fingerprints are never mixed.
    fn fingerprint(&self) -> String;
    fn dim(&self) -> usize;
    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

/// Embeds `texts` in one provider call and L2-normalizes the results.
pub async fn embed_texts(
    texts: &[String],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Vec<f64>>, EmbedError> {
    if let Some(index) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(EmbedError::EmptyText { index });
    }
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let vectors = provider.embed_batch(texts).await?;
    if vectors.len() != texts.len() {
        return Err(EmbedError::MalformedResponse(format!(
            "{} vectors for {} inputs",
            vectors.len(),
            texts.len()
        )));
    }
    let dim = provider.dim();
    vectors
        .into_iter()
        .enumerate()
        .map(|(index, v)| {
            if v.len() != dim {
                return Err(EmbedError::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            normalize(v).ok_or(EmbedError::EmptyText { index })
        })
        .collect()
}

fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = l2_norm(&v);
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub chunk_id: String,
    pub source: Source,
    pub vector: Vec<f64>,
    pub metadata: BTreeMap<String, String>,
    pub body: String,
}

impl EmbeddingRecord {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// One chunk queued for embedding. `text` is what the embedder sees; `body`
/// is what retrieval returns.
#[derive(Debug, Clone, PartialEq)]
pub struct StoreInput {
    pub chunk_id: String,
    pub text: String,
    pub body: String,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub chunk_id: String,
    /// Cosine similarity between the query and the record.
    pub score: f64,
    /// Relevance assigned by the reranker, once reranked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerank_score: Option<f64>,
    pub metadata: BTreeMap<String, String>,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    source: Source,
    dim: usize,
    provider_fingerprint: String,
    records: Vec<EmbeddingRecord>,
}

impl VectorStore {
    /// Assembles a store, checking the per-store invariants.
    pub fn from_records(
        source: Source,
        dim: usize,
        provider_fingerprint: impl Into<String>,
        records: Vec<EmbeddingRecord>,
    ) -> Result<Self, StoreError> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.chunk_id.as_str()) {
                return Err(StoreError::DuplicateChunkId(r.chunk_id.clone()));
            }
            if r.vector.len() != dim {
                return Err(StoreError::DimensionMismatch {
                    expected: dim,
                    found: r.vector.len(),
                });
            }
        }
        Ok(Self {
            source,
            dim,
            provider_fingerprint: provider_fingerprint.into(),
            records,
        })
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provider_fingerprint(&self) -> &str {
        &self.provider_fingerprint
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn check_fingerprint(&self, expected: &str) -> Result<(), StoreError> {
        if self.provider_fingerprint != expected {
            return Err(StoreError::FingerprintMismatch {
                expected: expected.to_string(),
                found: self.provider_fingerprint.clone(),
            });
        }
        Ok(())
    }

    /// Appends the records of another store built by the same embedder.
    pub fn extend(&mut self, other: VectorStore) -> Result<(), StoreError> {
        other.check_fingerprint(&self.provider_fingerprint)?;
        let mut records = std::mem::take(&mut self.records);
        records.extend(other.records);
        *self = Self::from_records(
            self.source,
            self.dim,
            self.provider_fingerprint.clone(),
            records,
        )?;
        Ok(())
    }

    /// Top-`k` records by cosine similarity to `query`, best first; equal
    /// scores are ordered by ascending chunk id.
    pub fn search(&self, query: &[f64], k: usize) -> Result<Vec<ScoredHit>, StoreError> {
        if query.len() != self.dim {
            return Err(StoreError::DimensionMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        if k == 0 {
            return Err(StoreError::InvalidQuery("k must be at least 1".into()));
        }
        let query_norm = l2_norm(query);
        if query_norm == 0.0 || !query_norm.is_finite() {
            return Err(StoreError::InvalidQuery(
                "query vector has zero or non-finite norm".into(),
            ));
        }
        let mut scored: Vec<(f64, &EmbeddingRecord)> = self
            .records
            .iter()
            .map(|r| (cosine(query, query_norm, &r.vector), r))
            .collect();
        scored.sort_by(|a, b| rank_order(a.0, &a.1.chunk_id, b.0, &b.1.chunk_id));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(score, r)| ScoredHit {
                chunk_id: r.chunk_id.clone(),
                score,
                rerank_score: None,
                metadata: r.metadata.clone(),
                body: r.body.clone(),
            })
            .collect())
    }
}

fn cosine(query: &[f64], query_norm: f64, record: &[f64]) -> f64 {
    let dot: f64 = query.iter().zip(record).map(|(a, b)| a * b).sum();
    let denom = query_norm * l2_norm(record);
    if denom == 0.0 {
        0.0
    } else {
        dot / denom
    }
}

/// Descending score, then ascending chunk id.
pub(crate) fn rank_order(score_a: f64, id_a: &str, score_b: f64, id_b: &str) -> Ordering {
    score_b.total_cmp(&score_a).then_with(|| id_a.cmp(id_b))
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub batch_size: usize,
    /// Maximum number of embedding batches in flight.
    pub concurrency: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            batch_size: DEFAULT_BATCH_SIZE,
            concurrency: 1,
        }
    }
}

/// Embeds every chunk and collects the records into a store.
pub async fn build_store(
    inputs: Vec<StoreInput>,
    source: Source,
    provider: &dyn EmbeddingProvider,
    options: BuildOptions,
) -> Result<VectorStore, StoreError> {
    if inputs.is_empty() {
        return Err(StoreError::EmptyInput);
    }
    if let Some(bad) = inputs
        .iter()
        .find(|i| i.text.trim().is_empty() || i.body.trim().is_empty())
    {
        return Err(StoreError::Embed {
            chunk_id: bad.chunk_id.clone(),
            source: EmbedError::EmptyText { index: 0 },
        });
    }
    let mut seen = HashSet::new();
    if let Some(dup) = inputs.iter().find(|i| !seen.insert(i.chunk_id.as_str())) {
        return Err(StoreError::DuplicateChunkId(dup.chunk_id.clone()));
    }

    let batch_size = options.batch_size.max(1);
    let batches: Vec<&[StoreInput]> = inputs.chunks(batch_size).collect();
    let vectors: Vec<Vec<Vec<f64>>> = futures::stream::iter(batches.iter().copied())
        .map(|batch| async move {
            let texts: Vec<String> = batch.iter().map(|i| i.text.clone()).collect();
            embed_texts(&texts, provider).await.map_err(|source| {
                let chunk_id = match &source {
                    EmbedError::EmptyText { index } => batch[*index].chunk_id.clone(),
                    _ => batch[0].chunk_id.clone(),
                };
                StoreError::Embed { chunk_id, source }
            })
        })
        .buffered(options.concurrency.max(1))
        .try_collect()
        .await?;

    let records = inputs
        .into_iter()
        .zip(vectors.into_iter().flatten())
        .map(|(input, vector)| EmbeddingRecord {
            chunk_id: input.chunk_id,
            source,
            vector,
            metadata: input.metadata,
            body: input.body,
        })
        .collect();
    VectorStore::from_records(source, provider.dim(), provider.fingerprint(), records)
}
