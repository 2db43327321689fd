//! End-to-end verification run: ingest, embed, retrieve, analyze, report.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use futures::{StreamExt, TryStreamExt};
use sha2::{Digest, Sha256};

use crate::analyzer::{
    run_battery, AnalyzeError, AnalyzeOptions, ChatBackend, LlmSettings, RemoteChat, ScriptedMock,
    Verdict, PROMPT_VERSION,
};
use crate::chunk_meta::{code_input, paper_input};
use crate::code_ingest::{segment_code, unpack_codebase, CodeChunking, CodeError, UnpackOptions};
use crate::embed_store::{
    build_store, embed_texts, load_store_expecting, persist_store, BuildOptions, EmbedError,
    EmbeddingProvider, FeatureHashEmbedder, RemoteEmbedder, Source, StoreError, StoreInput,
    VectorStore, DEFAULT_DIM, FORMAT_VERSION,
};
use crate::http::{endpoint_url, HttpError, JsonClient, NetworkMode, RetryPolicy};
use crate::paper_ingest::{load_paper, segment_paper, Converter, PaperChunking, PaperError};
use crate::reporter::{
    render, AlignmentReport, Format, ReportError, ReportMeta, STABLE_CREATED_AT,
};
use crate::retriever::{
    default_query_set, filter_preset, load_query_file, merge_queries, retrieve_with_vector,
    LexicalReranker, Preset, QueryError, QuerySpec, RemoteReranker, RerankMode, Reranker,
    RetrievalParams, RetrieveError, Stores,
};

pub const DEFAULT_MAX_CONCURRENCY: usize = 4;
pub const EMBEDDING_KEY_VAR: &str = "EMBEDDING_API_KEY";
pub const LLM_KEY_VAR: &str = "LLM_API_KEY";
pub const RERANK_KEY_VAR: &str = "RERANK_API_KEY";
pub const DEFAULT_EMBEDDING_MODEL: &str = "text-embedding-3-small";
pub const DEFAULT_LLM_MODEL: &str = "gpt-4o-mini";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    InputError,
    ProviderAbort,
    Unverifiable,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            Self::Success => 0,
            Self::InputError => 2,
            Self::ProviderAbort => 3,
            Self::Unverifiable => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    LoadPaper,
    SegmentPaper,
    UnpackCode,
    SegmentCode,
    BuildStore,
    Queries,
    Retrieve,
    Analyze,
    Render,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Config => "config",
            Self::LoadPaper => "load_paper",
            Self::SegmentPaper => "segment_paper",
            Self::UnpackCode => "unpack_codebase",
            Self::SegmentCode => "segment_code",
            Self::BuildStore => "build_store",
            Self::Queries => "queries",
            Self::Retrieve => "retrieve",
            Self::Analyze => "analyze",
            Self::Render => "render",
        })
    }
}

/// A failed run: the stage, the exit status it maps to, and a hint.
#[derive(Debug)]
pub struct RunError {
    pub stage: Stage,
    pub status: ExitStatus,
    pub message: String,
    pub hint: Option<&'static str>,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)?;
        if let Some(hint) = self.hint {
            write!(f, "\n  hint: {hint}")?;
        }
        Ok(())
    }
}

impl std::error::Error for RunError {}

impl RunError {
    fn input(stage: Stage, message: impl ToString, hint: Option<&'static str>) -> Self {
        Self {
            stage,
            status: ExitStatus::InputError,
            message: message.to_string(),
            hint,
        }
    }

    fn provider(stage: Stage, message: impl ToString, hint: Option<&'static str>) -> Self {
        Self {
            stage,
            status: ExitStatus::ProviderAbort,
            message: message.to_string(),
            hint,
        }
    }
}

const HINT_NETWORK: &str = "check the endpoint URL and credentials, or rerun with --keep-going";

fn paper_error(e: PaperError) -> RunError {
    let hint = match &e {
        PaperError::PdfWithoutConverter(_) => {
            Some("pass --converter \"<cmd> {}\" or supply a markdown rendering")
        }
        PaperError::FileNotFound(_) => Some("check the --paper path"),
        PaperError::ConverterFailed { .. } => {
            Some("run the converter command by hand to see its output")
        }
        _ => None,
    };
    RunError::input(Stage::LoadPaper, e, hint)
}

fn code_error(e: CodeError) -> RunError {
    let hint = match &e {
        CodeError::ZipSlipDetected { .. } => {
            Some("the archive contains path-traversal entries; repack it")
        }
        CodeError::EmptyCodebase(_) => Some("no files matched the included extensions"),
        _ => None,
    };
    RunError::input(Stage::UnpackCode, e, hint)
}

fn embed_failure(stage: Stage, e: &EmbedError, message: String) -> RunError {
    match e {
        EmbedError::EmptyText { .. } => RunError::input(stage, message, None),
        _ => RunError::provider(stage, message, Some(HINT_NETWORK)),
    }
}

fn store_error(e: StoreError) -> RunError {
    match &e {
        StoreError::Embed { source, .. } => embed_failure(Stage::BuildStore, source, e.to_string()),
        _ => RunError::input(Stage::BuildStore, e, None),
    }
}

fn query_error(e: QueryError) -> RunError {
    RunError::input(Stage::Queries, e, Some("check the --queries file"))
}

fn retrieve_error(e: RetrieveError) -> RunError {
    match &e {
        RetrieveError::Embed(source) => embed_failure(Stage::Retrieve, source, e.to_string()),
        _ => RunError::input(Stage::Retrieve, e, None),
    }
}

fn analyze_error(e: AnalyzeError) -> RunError {
    match &e {
        AnalyzeError::BackendUnreachable { .. } => {
            RunError::provider(Stage::Analyze, e, Some(HINT_NETWORK))
        }
        AnalyzeError::MockMissingScript(_) => RunError::input(
            Stage::Analyze,
            e,
            Some("add an entry for every query id to the mock script"),
        ),
        _ => RunError::input(Stage::Analyze, e, None),
    }
}

fn report_error(e: ReportError) -> RunError {
    RunError::input(Stage::Render, e, Some("check that --out is writable"))
}

fn config_error(e: impl ToString) -> RunError {
    RunError::input(Stage::Config, e, None)
}

/// Remote endpoint settings. Credentials come from the environment only.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub embedding_url: Option<String>,
    pub embedding_model: String,
    pub embedding_dim: usize,
    pub llm_url: Option<String>,
    pub llm_model: String,
    pub rerank_url: Option<String>,
    pub retry: RetryPolicy,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            embedding_url: None,
            embedding_model: DEFAULT_EMBEDDING_MODEL.to_string(),
            embedding_dim: DEFAULT_DIM,
            llm_url: None,
            llm_model: DEFAULT_LLM_MODEL.to_string(),
            rerank_url: None,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Credentials {
    pub embedding: Option<String>,
    pub llm: Option<String>,
    pub rerank: Option<String>,
}

impl Credentials {
    pub fn from_env() -> Self {
        let var = |name| std::env::var(name).ok().filter(|v: &String| !v.is_empty());
        Self {
            embedding: var(EMBEDDING_KEY_VAR),
            llm: var(LLM_KEY_VAR),
            rerank: var(RERANK_KEY_VAR),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub paper_path: PathBuf,
    pub code_zip_path: PathBuf,
    pub out_dir: PathBuf,
    pub preset: Preset,
    pub queries_file: Option<PathBuf>,
    pub retrieval: RetrievalParams,
    pub formats: Vec<Format>,
    pub offline: bool,
    pub endpoints: EndpointConfig,
    pub mock_script: Option<PathBuf>,
    pub converter: Option<String>,
    pub max_concurrency: usize,
    pub keep_going: bool,
    pub cache_dir: Option<PathBuf>,
    pub stable_output: bool,
    pub paper_chunking: PaperChunking,
    pub code_chunking: CodeChunking,
    pub unpack: UnpackOptions,
}

impl RunConfig {
    pub fn new(
        paper_path: impl Into<PathBuf>,
        code_zip_path: impl Into<PathBuf>,
        out_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            paper_path: paper_path.into(),
            code_zip_path: code_zip_path.into(),
            out_dir: out_dir.into(),
            preset: Preset::All,
            queries_file: None,
            retrieval: RetrievalParams::default(),
            formats: Format::ALL.to_vec(),
            offline: false,
            endpoints: EndpointConfig::default(),
            mock_script: None,
            converter: None,
            max_concurrency: DEFAULT_MAX_CONCURRENCY,
            keep_going: false,
            cache_dir: None,
            stable_output: false,
            paper_chunking: PaperChunking::default(),
            code_chunking: CodeChunking::default(),
            unpack: UnpackOptions::default(),
        }
    }
}

/// The three model-facing services a run uses.
#[derive(Clone)]
pub struct Backends {
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub reranker: Arc<dyn Reranker>,
    pub chat: Arc<dyn ChatBackend>,
}

impl Backends {
    /// Builds backends from configuration. In offline mode any configured
    /// endpoint is an error, and no HTTP client is ever constructed.
    pub fn from_config(config: &RunConfig, credentials: &Credentials) -> Result<Self, RunError> {
        let ep = &config.endpoints;
        let mode = if config.offline {
            NetworkMode::Offline
        } else {
            NetworkMode::Online
        };
        if config.offline {
            let configured: Vec<&str> = [
                ("embedding", &ep.embedding_url),
                ("llm", &ep.llm_url),
                ("rerank", &ep.rerank_url),
            ]
            .iter()
            .filter(|(_, url)| url.is_some())
            .map(|(name, _)| *name)
            .collect();
            if !configured.is_empty() {
                return Err(RunError::input(
                    Stage::Config,
                    format!(
                        "--offline forbids remote endpoints, but {} configured",
                        configured.join(", ")
                    ),
                    Some("drop --offline or remove the endpoint options"),
                ));
            }
        }
        let client = |url: &str, suffix: &str, key: &Option<String>| {
            JsonClient::new(&endpoint_url(url, suffix), key.clone(), ep.retry, mode)
                .map_err(|e: HttpError| config_error(e))
        };

        let embedder: Arc<dyn EmbeddingProvider> = match &ep.embedding_url {
            Some(url) => Arc::new(RemoteEmbedder::new(
                client(url, "/embeddings", &credentials.embedding)?,
                ep.embedding_model.clone(),
                ep.embedding_dim,
            )),
            None => {
                if ep.embedding_dim == 0 {
                    return Err(config_error("embedding dimension must be at least 1"));
                }
                Arc::new(FeatureHashEmbedder::new(ep.embedding_dim))
            }
        };
        let reranker: Arc<dyn Reranker> = match &ep.rerank_url {
            Some(url) => Arc::new(RemoteReranker::new(client(
                url,
                "/rerank",
                &credentials.rerank,
            )?)),
            None => Arc::new(LexicalReranker),
        };
        let chat: Arc<dyn ChatBackend> = match (&config.mock_script, &ep.llm_url) {
            (Some(path), _) => Arc::new(ScriptedMock::from_file(path).map_err(config_error)?),
            (None, Some(url)) => Arc::new(RemoteChat::new(
                client(url, "/chat/completions", &credentials.llm)?,
                LlmSettings::new(ep.llm_model.clone()),
            )),
            (None, None) => {
                return Err(RunError::input(
                    Stage::Config,
                    "no language model configured",
                    Some("pass --mock-script <file> or --llm-url <endpoint>"),
                ))
            }
        };
        Ok(Self {
            embedder,
            reranker,
            chat,
        })
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub status: ExitStatus,
    pub report: AlignmentReport,
    pub written: Vec<PathBuf>,
}

/// Runs with backends built from `config` and environment credentials.
pub async fn run(config: &RunConfig) -> Result<RunOutcome, RunError> {
    let backends = Backends::from_config(config, &Credentials::from_env())?;
    run_with(config, &backends).await
}

pub async fn run_with(config: &RunConfig, backends: &Backends) -> Result<RunOutcome, RunError> {
    let concurrency = config.max_concurrency.max(1);
    let embedder = backends.embedder.as_ref();
    let fingerprint = embedder.fingerprint();
    let mut warnings = Vec::new();

    let queries = resolve_queries(config)?;
    if queries.is_empty() {
        return Err(RunError::input(
            Stage::Queries,
            format!("preset `{}` selects no queries", config.preset.as_str()),
            None,
        ));
    }

    tracing::info!(path = %config.paper_path.display(), "loading paper");
    let converter = config.converter.as_deref().map(Converter::new);
    let paper = load_paper(&config.paper_path, converter.as_ref()).map_err(paper_error)?;
    let paper_chunks = segment_paper(&paper, config.paper_chunking);
    let paper_inputs = non_blank(paper_chunks.iter().map(paper_input), &mut warnings);
    if paper_inputs.is_empty() {
        return Err(RunError::input(
            Stage::SegmentPaper,
            "the paper produced no non-blank chunks",
            None,
        ));
    }

    tracing::info!(path = %config.code_zip_path.display(), "unpacking codebase");
    let files = unpack_codebase(&config.code_zip_path, &config.unpack).map_err(code_error)?;
    let code_inputs = non_blank(
        files
            .iter()
            .flat_map(|f| segment_code(f, config.code_chunking))
            .map(|c| code_input(&c)),
        &mut warnings,
    );
    if code_inputs.is_empty() {
        return Err(RunError::input(
            Stage::SegmentCode,
            "the codebase produced no non-blank chunks",
            None,
        ));
    }

    let build = BuildOptions {
        concurrency,
        ..BuildOptions::default()
    };
    let paper_key = cache_key(
        Source::Paper,
        &read_bytes(&config.paper_path, Stage::LoadPaper)?,
        &format!("{:?}|{:?}", config.paper_chunking, config.converter),
        &fingerprint,
    );
    let code_key = cache_key(
        Source::Code,
        &read_bytes(&config.code_zip_path, Stage::UnpackCode)?,
        &format!("{:?}|{:?}", config.code_chunking, config.unpack),
        &fingerprint,
    );
    let paper_store = cached_store(
        config,
        paper_key,
        paper_inputs,
        Source::Paper,
        embedder,
        build,
        &mut warnings,
    )
    .await?;
    let code_store = cached_store(
        config,
        code_key,
        code_inputs,
        Source::Code,
        embedder,
        build,
        &mut warnings,
    )
    .await?;

    let vectors = question_vectors(config, &queries, embedder, &mut warnings).await?;
    let stores = Stores {
        paper: &paper_store,
        code: &code_store,
    };
    let reranker = backends.reranker.as_ref();
    tracing::info!(queries = queries.len(), "retrieving evidence");
    let bundles: Vec<_> = futures::stream::iter(queries.iter().zip(&vectors))
        .map(|(q, v)| retrieve_with_vector(q, v, stores, reranker, config.retrieval))
        .buffered(concurrency)
        .try_collect()
        .await
        .map_err(retrieve_error)?;

    tracing::info!(backend = %backends.chat.describe(), "analyzing aspects");
    let options = AnalyzeOptions {
        keep_going: config.keep_going,
        concurrency,
    };
    let findings = run_battery(&queries, &bundles, backends.chat.as_ref(), options)
        .await
        .map_err(analyze_error)?;

    let rerank_mode = if bundles.iter().all(|b| b.rerank_mode == RerankMode::Remote) {
        RerankMode::Remote
    } else {
        RerankMode::Lexical
    };
    for b in &bundles {
        warnings.extend(b.warnings.iter().map(|w| format!("{}: {w}", b.query_id)));
    }
    let meta = ReportMeta {
        paper_title: paper.title.clone(),
        paper_path: file_label(&config.paper_path),
        code_archive: file_label(&config.code_zip_path),
        created_at: if config.stable_output {
            STABLE_CREATED_AT.to_string()
        } else {
            chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
        },
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        provider_fingerprints: BTreeMap::from([
            ("embedding".to_string(), fingerprint.clone()),
            ("llm".to_string(), backends.chat.describe()),
            ("reranker".to_string(), reranker.mode().as_str().to_string()),
        ]),
        preset: config.preset.as_str().to_string(),
        k: config.retrieval.k,
        rerank_mode,
        prompt_version: PROMPT_VERSION.to_string(),
    };
    let weights = queries
        .iter()
        .map(|q| (q.query_id.clone(), q.weight))
        .collect();
    let report = AlignmentReport::assemble(meta, findings, &weights, &bundles, warnings);

    let written = render(&report, &config.formats, &config.out_dir).map_err(report_error)?;
    let unverifiable = report
        .findings
        .iter()
        .any(|f| f.verdict == Verdict::Unverifiable);
    let status = if config.keep_going && unverifiable {
        ExitStatus::Unverifiable
    } else {
        ExitStatus::Success
    };
    Ok(RunOutcome {
        status,
        report,
        written,
    })
}

/// The queries a run will ask, in order.
pub fn resolve_queries(config: &RunConfig) -> Result<Vec<QuerySpec>, RunError> {
    let base = default_query_set(config.preset);
    match &config.queries_file {
        None => Ok(base),
        Some(path) => {
            let extra = filter_preset(load_query_file(path).map_err(query_error)?, config.preset);
            Ok(merge_queries(base, extra))
        }
    }
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn read_bytes(path: &Path, stage: Stage) -> Result<Vec<u8>, RunError> {
    std::fs::read(path)
        .map_err(|e| RunError::input(stage, format!("cannot read {}: {e}", path.display()), None))
}

/// Drops whitespace-only chunks, which carry nothing to embed.
fn non_blank(
    inputs: impl Iterator<Item = StoreInput>,
    warnings: &mut Vec<String>,
) -> Vec<StoreInput> {
    let mut kept = Vec::new();
    for input in inputs {
        if input.text.trim().is_empty() || input.body.trim().is_empty() {
            tracing::debug!(chunk = %input.chunk_id, "skipping blank chunk");
        } else {
            kept.push(input);
        }
    }
    if kept.is_empty() {
        warnings.push("all chunks were blank".to_string());
    }
    kept
}

fn cache_key(source: Source, input: &[u8], params: &str, fingerprint: &str) -> String {
    let mut h = Sha256::new();
    for part in [
        format!("papercheck-store/v{FORMAT_VERSION}").as_bytes(),
        source.as_str().as_bytes(),
        input,
        params.as_bytes(),
        fingerprint.as_bytes(),
    ] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    format!("{}-{}", source.as_str(), hex::encode(&h.finalize()[..16]))
}

async fn cached_store(
    config: &RunConfig,
    key: String,
    inputs: Vec<StoreInput>,
    source: Source,
    embedder: &dyn EmbeddingProvider,
    build: BuildOptions,
    warnings: &mut Vec<String>,
) -> Result<VectorStore, RunError> {
    let fingerprint = embedder.fingerprint();
    let dir = config.cache_dir.as_ref().map(|d| d.join(&key));
    if let Some(dir) = &dir {
        if dir.exists() {
            match load_store_expecting(dir, &fingerprint) {
                Ok(store) => {
                    tracing::info!(%source, dir = %dir.display(), "store cache hit");
                    return Ok(store);
                }
                Err(e) => warnings.push(format!(
                    "ignoring unusable {source} store cache at {}: {e}",
                    dir.display()
                )),
            }
        }
    }
    tracing::info!(%source, chunks = inputs.len(), "embedding");
    let store = build_store(inputs, source, embedder, build)
        .await
        .map_err(store_error)?;
    if let (Some(cache_dir), Some(dir)) = (&config.cache_dir, &dir) {
        if let Err(e) = persist_cached(&store, cache_dir, dir) {
            warnings.push(format!("could not cache {source} store: {e}"));
        }
    }
    Ok(store)
}

/// Persists into a temp dir beside the final location and renames it in,
/// so concurrent or interrupted runs never see half a store.
fn persist_cached(store: &VectorStore, cache_dir: &Path, dir: &Path) -> Result<(), StoreError> {
    let io = |source| StoreError::Io {
        path: cache_dir.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(cache_dir).map_err(io)?;
    let staging = tempfile::Builder::new()
        .prefix(".store-")
        .tempdir_in(cache_dir)
        .map_err(io)?;
    persist_store(store, staging.path())?;
    if dir.exists() {
        let _ = std::fs::remove_dir_all(dir);
    }
    let staged = staging.keep();
    std::fs::rename(&staged, dir).map_err(io)
}

type VectorCache = BTreeMap<String, Vec<f64>>;

/// Embeds the questions, reusing vectors cached for this embedder.
async fn question_vectors(
    config: &RunConfig,
    queries: &[QuerySpec],
    embedder: &dyn EmbeddingProvider,
    warnings: &mut Vec<String>,
) -> Result<Vec<Vec<f64>>, RunError> {
    let fingerprint = embedder.fingerprint();
    let path = config.cache_dir.as_ref().map(|d| {
        let digest = Sha256::digest(fingerprint.as_bytes());
        d.join(format!("questions-{}.json", hex::encode(&digest[..16])))
    });
    let mut cache: VectorCache = path
        .as_ref()
        .and_then(|p| std::fs::read_to_string(p).ok())
        .and_then(|text| serde_json::from_str(&text).ok())
        .unwrap_or_default();
    cache.retain(|_, v| v.len() == embedder.dim());

    let mut missing: Vec<String> = queries
        .iter()
        .map(|q| q.question.clone())
        .filter(|q| !cache.contains_key(q))
        .collect();
    missing.sort();
    missing.dedup();
    if !missing.is_empty() {
        let vectors = embed_texts(&missing, embedder).await.map_err(|e| {
            embed_failure(
                Stage::Retrieve,
                &e,
                format!("embedding questions failed: {e}"),
            )
        })?;
        cache.extend(missing.into_iter().zip(vectors));
        if let Some(path) = &path {
            if let Err(e) = write_atomic(
                path,
                &serde_json::to_string(&cache).expect("vectors serialize"),
            ) {
                warnings.push(format!("could not cache question vectors: {e}"));
            }
        }
    }
    Ok(queries.iter().map(|q| cache[&q.question].clone()).collect())
}

fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    std::io::Write::write_all(&mut tmp, text.as_bytes())?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
