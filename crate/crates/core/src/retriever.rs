//! Verification queries, reranking and evidence assembly.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::embed_store::{
    embed_texts, EmbedError, EmbeddingProvider, ScoredHit, Source, StoreError, VectorStore,
};
use crate::http::{HttpError, JsonClient};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_FETCH_MULTIPLIER: usize = 3;
pub const DEFAULT_CONTEXT_CHAR_BUDGET: usize = 8000;
const MIN_LEXICAL_TOKEN_CHARS: usize = 3;

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("cannot read query file {path}: {reason}")]
    Unreadable { path: String, reason: String },
    #[error("invalid query `{query_id}`: {reason}")]
    Invalid { query_id: String, reason: String },
    #[error("duplicate query id `{0}`")]
    Duplicate(String),
}

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("embedding the question failed: {0}")]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("k must be at least 1")]
    InvalidK,
}

#[derive(Debug, Error)]
pub enum RerankError {
    #[error("reranker unavailable: {0}")]
    Unavailable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetTag {
    Offtheshelf,
    Custom,
    Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Offtheshelf,
    Custom,
    All,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Offtheshelf => "offtheshelf",
            Self::Custom => "custom",
            Self::All => "all",
        }
    }

    fn admits(self, tags: &BTreeSet<PresetTag>) -> bool {
        match self {
            Self::All => true,
            Self::Offtheshelf => {
                tags.contains(&PresetTag::Offtheshelf) || tags.contains(&PresetTag::Common)
            }
            Self::Custom => tags.contains(&PresetTag::Custom) || tags.contains(&PresetTag::Common),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "offtheshelf" => Ok(Self::Offtheshelf),
            "custom" => Ok(Self::Custom),
            "all" => Ok(Self::All),
            other => Err(format!(
                "unknown preset `{other}` (expected offtheshelf, custom or all)"
            )),
        }
    }
}

fn default_weight() -> f64 {
    1.0
}

fn default_targets() -> BTreeSet<Source> {
    BTreeSet::from([Source::Paper, Source::Code])
}

fn default_tags() -> BTreeSet<PresetTag> {
    BTreeSet::from([PresetTag::Common])
}

/// One verification aspect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    pub query_id: String,
    pub question: String,
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default = "default_targets")]
    pub targets: BTreeSet<Source>,
    #[serde(default = "default_tags")]
    pub preset_tags: BTreeSet<PresetTag>,
}

impl QuerySpec {
    fn builtin(query_id: &str, question: &str, tags: &[PresetTag]) -> Self {
        Self {
            query_id: query_id.to_string(),
            question: question.to_string(),
            weight: 1.0,
            targets: default_targets(),
            preset_tags: tags.iter().copied().collect(),
        }
    }

    fn validate(&self) -> Result<(), QueryError> {
        let invalid = |reason: &str| QueryError::Invalid {
            query_id: self.query_id.clone(),
            reason: reason.to_string(),
        };
        if self.query_id.trim().is_empty() {
            return Err(invalid("query_id is empty"));
        }
        if self.question.trim().is_empty() {
            return Err(invalid("question is empty"));
        }
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(invalid("weight must be a positive number"));
        }
        if self.targets.is_empty() {
            return Err(invalid("targets must name paper, code or both"));
        }
        Ok(())
    }
}

/// The built-in question battery, in its fixed order.
pub fn builtin_queries() -> Vec<QuerySpec> {
    use PresetTag::*;
    vec![
        QuerySpec::builtin(
            "arch",
            "What is the model architecture described in the paper?",
            &[Offtheshelf, Common],
        ),
        QuerySpec::builtin(
            "hparams",
            "What hyperparameters are suggested for training?",
            &[Offtheshelf, Common],
        ),
        QuerySpec::builtin(
            "algorithm",
            "What training algorithm is used?",
            &[Offtheshelf, Common],
        ),
        QuerySpec::builtin(
            "data_prep",
            "What data preprocessing steps are applied?",
            &[Common],
        ),
        QuerySpec::builtin(
            "evaluation",
            "What evaluation metrics and procedures are used?",
            &[Common],
        ),
        QuerySpec::builtin(
            "loss",
            "What loss/objective function is optimized?",
            &[Common],
        ),
        QuerySpec::builtin(
            "custom_method",
            "What novel algorithm or procedure does the work introduce, step by step?",
            &[Custom],
        ),
    ]
}

/// Built-in queries admitted by `preset`.
pub fn default_query_set(preset: Preset) -> Vec<QuerySpec> {
    filter_preset(builtin_queries(), preset)
}

pub fn filter_preset(queries: Vec<QuerySpec>, preset: Preset) -> Vec<QuerySpec> {
    queries
        .into_iter()
        .filter(|q| preset.admits(&q.preset_tags))
        .collect()
}

/// Reads a JSON list of query specs.
pub fn load_query_file(path: &Path) -> Result<Vec<QuerySpec>, QueryError> {
    let unreadable = |reason: String| QueryError::Unreadable {
        path: path.display().to_string(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| unreadable(e.to_string()))?;
    let queries: Vec<QuerySpec> =
        serde_json::from_str(&text).map_err(|e| unreadable(e.to_string()))?;
    let mut seen = HashSet::new();
    for q in &queries {
        q.validate()?;
        if !seen.insert(q.query_id.clone()) {
            return Err(QueryError::Duplicate(q.query_id.clone()));
        }
    }
    Ok(queries)
}

/// Overlays user queries on the base set: same id replaces in place, new ids
/// are appended in file order.
pub fn merge_queries(base: Vec<QuerySpec>, extra: Vec<QuerySpec>) -> Vec<QuerySpec> {
    let mut merged = base;
    for q in extra {
        match merged.iter_mut().find(|m| m.query_id == q.query_id) {
            Some(slot) => *slot = q,
            None => merged.push(q),
        }
    }
    merged
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RerankMode {
    Remote,
    Lexical,
}

impl RerankMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Remote => "remote",
            Self::Lexical => "lexical",
        }
    }
}

/// Assigns a relevance score to each passage for a query.
#[async_trait]
pub trait Reranker: Send + Sync {
    fn mode(&self) -> RerankMode;
    async fn score(&self, query: &str, passages: &[String]) -> Result<Vec<f64>, RerankError>;
}

/// Fraction of the query's distinct tokens (lowercased, alphanumeric, at
/// least three characters) that also occur in the passage.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalReranker;

pub fn lexical_tokens(text: &str) -> HashSet<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= MIN_LEXICAL_TOKEN_CHARS)
        .map(str::to_string)
        .collect()
}

pub fn lexical_score(question: &str, body: &str) -> f64 {
    let q = lexical_tokens(question);
    if q.is_empty() {
        return 0.0;
    }
    let b = lexical_tokens(body);
    q.intersection(&b).count() as f64 / q.len() as f64
}

#[async_trait]
impl Reranker for LexicalReranker {
    fn mode(&self) -> RerankMode {
        RerankMode::Lexical
    }

    async fn score(&self, query: &str, passages: &[String]) -> Result<Vec<f64>, RerankError> {
        Ok(passages.iter().map(|p| lexical_score(query, p)).collect())
    }
}

/// Reranking over HTTP: `POST {query, passages}`, answered with a list of
/// `{index, relevance_score}` entries (also accepted: `score` or `logit`,
/// under `results`, `rankings` or `data`).
#[derive(Debug, Clone)]
pub struct RemoteReranker {
    client: JsonClient,
}

impl RemoteReranker {
    pub fn new(client: JsonClient) -> Self {
        Self { client }
    }
}

#[derive(Serialize)]
struct RerankRequest<'a> {
    query: &'a str,
    passages: &'a [String],
}

#[async_trait]
impl Reranker for RemoteReranker {
    fn mode(&self) -> RerankMode {
        RerankMode::Remote
    }

    async fn score(&self, query: &str, passages: &[String]) -> Result<Vec<f64>, RerankError> {
        let response = self
            .client
            .post(&RerankRequest { query, passages })
            .await
            .map_err(|e: HttpError| RerankError::Unavailable(e.to_string()))?;
        parse_rerank_response(&response, passages.len())
    }
}

pub(crate) fn parse_rerank_response(value: &Value, n: usize) -> Result<Vec<f64>, RerankError> {
    let bad = |m: String| RerankError::Unavailable(format!("malformed rerank response: {m}"));
    let list = ["results", "rankings", "data"]
        .iter()
        .find_map(|k| value.get(*k))
        .or(Some(value))
        .and_then(Value::as_array)
        .ok_or_else(|| bad("no ranking list".into()))?;
    let mut scores: Vec<Option<f64>> = vec![None; n];
    for item in list {
        let index = item
            .get("index")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad("entry without index".into()))? as usize;
        let score = ["relevance_score", "score", "logit"]
            .iter()
            .find_map(|k| item.get(*k).and_then(Value::as_f64))
            .ok_or_else(|| bad(format!("entry {index} without score")))?;
        match scores.get_mut(index) {
            Some(slot @ None) => *slot = Some(score),
            Some(Some(_)) => return Err(bad(format!("index {index} repeated"))),
            None => return Err(bad(format!("index {index} out of range"))),
        }
    }
    scores
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| bad(format!("passage {i} not ranked"))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetrievalParams {
    pub k: usize,
    pub fetch_multiplier: usize,
    pub context_char_budget: usize,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            fetch_multiplier: DEFAULT_FETCH_MULTIPLIER,
            context_char_budget: DEFAULT_CONTEXT_CHAR_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceStats {
    pub fetched: usize,
    pub kept: usize,
    pub budget_drops: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub query_id: String,
    pub paper_hits: Vec<ScoredHit>,
    pub code_hits: Vec<ScoredHit>,
    pub rerank_mode: RerankMode,
    pub context_char_budget: usize,
    pub paper_stats: SourceStats,
    pub code_stats: SourceStats,
    pub warnings: Vec<String>,
}

impl EvidenceBundle {
    pub fn hits(&self, source: Source) -> &[ScoredHit] {
        match source {
            Source::Paper => &self.paper_hits,
            Source::Code => &self.code_hits,
        }
    }
}

/// Reorders candidates by reranker score, then cosine, then chunk id.
pub(crate) fn apply_rerank(mut hits: Vec<ScoredHit>, scores: &[f64]) -> Vec<ScoredHit> {
    for (hit, s) in hits.iter_mut().zip(scores) {
        hit.rerank_score = Some(*s);
    }
    hits.sort_by(|a, b| {
        let ra = a.rerank_score.unwrap_or(f64::NEG_INFINITY);
        let rb = b.rerank_score.unwrap_or(f64::NEG_INFINITY);
        rb.total_cmp(&ra)
            .then_with(|| b.score.total_cmp(&a.score))
            .then_with(|| a.chunk_id.cmp(&b.chunk_id))
    });
    hits
}

/// Keeps hits in rank order while their bodies fit in `budget` characters;
/// a hit that does not fit is dropped and packing continues.
pub(crate) fn pack_budget(hits: Vec<ScoredHit>, budget: usize) -> (Vec<ScoredHit>, usize) {
    let mut used = 0;
    let mut dropped = 0;
    let mut kept = Vec::with_capacity(hits.len());
    for hit in hits {
        let len = hit.body.chars().count();
        if used + len <= budget {
            used += len;
            kept.push(hit);
        } else {
            dropped += 1;
        }
    }
    (kept, dropped)
}

/// Vector stores for both sources.
#[derive(Debug, Clone, Copy)]
pub struct Stores<'a> {
    pub paper: &'a VectorStore,
    pub code: &'a VectorStore,
}

impl Stores<'_> {
    fn get(&self, source: Source) -> &VectorStore {
        match source {
            Source::Paper => self.paper,
            Source::Code => self.code,
        }
    }
}

/// Runs one query against both stores and assembles its evidence.
pub async fn retrieve(
    query: &QuerySpec,
    stores: Stores<'_>,
    embedder: &dyn EmbeddingProvider,
    reranker: &dyn Reranker,
    params: RetrievalParams,
) -> Result<EvidenceBundle, RetrieveError> {
    if params.k == 0 {
        return Err(RetrieveError::InvalidK);
    }
    let fingerprint = embedder.fingerprint();
    stores.paper.check_fingerprint(&fingerprint)?;
    stores.code.check_fingerprint(&fingerprint)?;

    let query_vector = embed_texts(std::slice::from_ref(&query.question), embedder)
        .await?
        .pop()
        .expect("one vector per text");
    retrieve_with_vector(query, &query_vector, stores, reranker, params).await
}

/// Like [`retrieve`], with the question already embedded by the provider the
/// stores were built with.
pub async fn retrieve_with_vector(
    query: &QuerySpec,
    query_vector: &[f64],
    stores: Stores<'_>,
    reranker: &dyn Reranker,
    params: RetrievalParams,
) -> Result<EvidenceBundle, RetrieveError> {
    if params.k == 0 {
        return Err(RetrieveError::InvalidK);
    }
    let fetch = params.k.saturating_mul(params.fetch_multiplier.max(1));

    let mut candidates: Vec<(Source, Vec<ScoredHit>)> = Vec::new();
    for source in [Source::Paper, Source::Code] {
        let hits = if query.targets.contains(&source) {
            stores.get(source).search(query_vector, fetch)?
        } else {
            Vec::new()
        };
        candidates.push((source, hits));
    }

    let mut warnings = Vec::new();
    let mut mode = reranker.mode();
    let mut ranked = rerank_all(&query.question, &candidates, reranker).await;
    if let Err(e) = &ranked {
        warnings.push(format!("{e}; falling back to lexical reranking"));
        tracing::warn!(query = %query.query_id, error = %e, "rerank degraded to lexical");
        mode = RerankMode::Lexical;
        ranked = rerank_all(&query.question, &candidates, &LexicalReranker).await;
    }
    let ranked = ranked.expect("lexical reranking cannot fail");

    let mut bundle = EvidenceBundle {
        query_id: query.query_id.clone(),
        paper_hits: Vec::new(),
        code_hits: Vec::new(),
        rerank_mode: mode,
        context_char_budget: params.context_char_budget,
        paper_stats: SourceStats::default(),
        code_stats: SourceStats::default(),
        warnings,
    };
    for ((source, fetched), mut hits) in candidates.iter().zip(ranked) {
        hits.truncate(params.k);
        let (kept, budget_drops) = pack_budget(hits, params.context_char_budget);
        let stats = SourceStats {
            fetched: fetched.len(),
            kept: kept.len(),
            budget_drops,
        };
        match source {
            Source::Paper => {
                bundle.paper_hits = kept;
                bundle.paper_stats = stats;
            }
            Source::Code => {
                bundle.code_hits = kept;
                bundle.code_stats = stats;
            }
        }
    }
    Ok(bundle)
}

async fn rerank_all(
    question: &str,
    candidates: &[(Source, Vec<ScoredHit>)],
    reranker: &dyn Reranker,
) -> Result<Vec<Vec<ScoredHit>>, RerankError> {
    let mut out = Vec::with_capacity(candidates.len());
    for (_, hits) in candidates {
        if hits.is_empty() {
            out.push(Vec::new());
            continue;
        }
        let passages: Vec<String> = hits.iter().map(|h| h.body.clone()).collect();
        let scores = reranker.score(question, &passages).await?;
        if scores.len() != hits.len() {
            return Err(RerankError::Unavailable(format!(
                "{} scores for {} passages",
                scores.len(),
                hits.len()
            )));
        }
        out.push(apply_rerank(hits.clone(), &scores));
    }
    Ok(out)
}
