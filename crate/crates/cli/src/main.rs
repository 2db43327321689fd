use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use papercheck::code_ingest::CodeChunking;
use papercheck::embed_store::load_store;
use papercheck::orchestrator::{self, ExitStatus, RunConfig};
use papercheck::paper_ingest::PaperChunking;
use papercheck::reporter::{format_score, Format};
use papercheck::retriever::Preset;

/// Check whether a codebase implements the method a paper describes.
///
/// API keys are read from EMBEDDING_API_KEY, LLM_API_KEY and RERANK_API_KEY.
#[derive(Parser)]
#[command(name = "papercheck", version)]
struct Cli {
    /// Log verbosity: -v for info, -vv for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare a paper against a zipped codebase and write a report.
    Verify(Box<VerifyArgs>),
    /// Inspect the verification questions.
    #[command(subcommand)]
    Queries(QueriesCommand),
    /// Inspect a persisted vector store.
    #[command(subcommand)]
    Store(StoreCommand),
}

#[derive(Subcommand)]
enum QueriesCommand {
    /// Print the questions a preset would ask.
    List {
        #[arg(long, default_value = "all")]
        preset: Preset,
        /// Extra or overriding queries (JSON list).
        #[arg(long)]
        queries: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum StoreCommand {
    /// Print a store's manifest and record summary.
    Inspect { dir: PathBuf },
}

#[derive(Args)]
struct VerifyArgs {
    /// Paper as markdown, or PDF together with --converter.
    #[arg(long)]
    paper: PathBuf,
    /// Codebase as a ZIP archive.
    #[arg(long)]
    code: PathBuf,
    /// Output directory for report.json / report.md / report.html.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "all")]
    preset: Preset,
    /// Evidence chunks kept per source and query.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Comma-separated report formats: json, md, html.
    #[arg(long, value_delimiter = ',', default_value = "json,md,html")]
    format: Vec<Format>,
    /// Never contact a remote endpoint.
    #[arg(long)]
    offline: bool,
    /// Scripted chat replies keyed by query id (JSON).
    #[arg(long)]
    mock_script: Option<PathBuf>,
    /// Extra or overriding queries (JSON list).
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Command converting a PDF to markdown on stdout; `{}` is the path.
    #[arg(long)]
    converter: Option<String>,
    #[arg(long, default_value_t = orchestrator::DEFAULT_MAX_CONCURRENCY)]
    max_concurrency: usize,
    /// Record failed aspects as unverifiable instead of aborting.
    #[arg(long)]
    keep_going: bool,
    /// Directory for reusable vector stores.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Pin created_at so repeated runs produce identical bytes.
    #[arg(long)]
    stable_output: bool,

    /// Embeddings endpoint (OpenAI-compatible). Without it the offline
    /// feature-hash embedder is used.
    #[arg(long)]
    embedding_url: Option<String>,
    #[arg(long, default_value = orchestrator::DEFAULT_EMBEDDING_MODEL)]
    embedding_model: String,
    #[arg(long, default_value_t = papercheck::embed_store::DEFAULT_DIM)]
    embedding_dim: usize,
    /// Chat completions endpoint (OpenAI-compatible).
    #[arg(long)]
    llm_url: Option<String>,
    #[arg(long, default_value = orchestrator::DEFAULT_LLM_MODEL)]
    llm_model: String,
    /// Rerank endpoint. Without it lexical reranking is used.
    #[arg(long)]
    rerank_url: Option<String>,

    #[arg(long, default_value_t = 4000)]
    paper_max_chars: usize,
    #[arg(long, default_value_t = 200)]
    paper_overlap_chars: usize,
    #[arg(long, default_value_t = 120)]
    code_max_lines: usize,
    #[arg(long, default_value_t = 20)]
    code_overlap_lines: usize,
    /// Character budget for evidence per source and query.
    #[arg(long, default_value_t = 8000)]
    context_budget: usize,
}

impl VerifyArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut c = RunConfig::new(self.paper, self.code, self.out);
        c.preset = self.preset;
        c.queries_file = self.queries;
        c.retrieval.k = self.k;
        c.retrieval.context_char_budget = self.context_budget;
        c.formats = self.format;
        c.offline = self.offline;
        c.mock_script = self.mock_script;
        c.converter = self.converter;
        c.max_concurrency = self.max_concurrency;
        c.keep_going = self.keep_going;
        c.cache_dir = self.cache;
        c.stable_output = self.stable_output;
        c.endpoints.embedding_url = self.embedding_url;
        c.endpoints.embedding_model = self.embedding_model;
        c.endpoints.embedding_dim = self.embedding_dim;
        c.endpoints.llm_url = self.llm_url;
        c.endpoints.llm_model = self.llm_model;
        c.endpoints.rerank_url = self.rerank_url;
        c.paper_chunking = PaperChunking::new(self.paper_max_chars, self.paper_overlap_chars)?;
        c.code_chunking = CodeChunking::new(self.code_max_lines, self.code_overlap_lines)?;
        Ok(c)
    }
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

async fn verify(args: VerifyArgs) -> ExitCode {
    if args.k == 0 {
        eprintln!("error: --k must be at least 1");
        return ExitCode::from(2);
    }
    let config = match args.into_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match orchestrator::run(&config).await {
        Ok(outcome) => {
            println!(
                "alignment score: {}",
                format_score(outcome.report.alignment_score)
            );
            for path in &outcome.written {
                println!("wrote {}", path.display());
            }
            if outcome.status == ExitStatus::Unverifiable {
                eprintln!("warning: some aspects could not be verified");
            }
            ExitCode::from(outcome.status.code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.status.code() as u8)
        }
    }
}

fn list_queries(preset: Preset, queries: Option<PathBuf>) -> Result<()> {
    let mut config = RunConfig::new("", "", "");
    config.preset = preset;
    config.queries_file = queries;
    let queries = orchestrator::resolve_queries(&config).map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut out = std::io::stdout().lock();
    for q in queries {
        let targets: Vec<_> = q.targets.iter().map(|t| t.as_str()).collect();
        writeln!(
            out,
            "{:<14} w={} [{}] {}",
            q.query_id,
            q.weight,
            targets.join(","),
            q.question
        )?;
    }
    Ok(())
}

fn inspect_store(dir: PathBuf) -> Result<()> {
    let store =
        load_store(&dir).with_context(|| format!("loading store from {}", dir.display()))?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "source:      {}", store.source())?;
    writeln!(out, "dim:         {}", store.dim())?;
    writeln!(out, "fingerprint: {}", store.provider_fingerprint())?;
    writeln!(out, "records:     {}", store.len())?;
    for record in store.records().iter().take(10) {
        let preview: String = record
            .body
            .chars()
            .take(60)
            .collect::<String>()
            .replace('\n', " ");
        writeln!(out, "  {:<32} {}", record.chunk_id, preview)?;
    }
    if store.len() > 10 {
        writeln!(out, "  ... {} more", store.len() - 10)?;
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let result = match cli.command {
        Command::Verify(args) => return verify(*args).await,
        Command::Queries(QueriesCommand::List { preset, queries }) => list_queries(preset, queries),
        Command::Store(StoreCommand::Inspect { dir }) => inspect_store(dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // A closed pipe (`| head`) is not a failure.
        Err(e)
            if e.downcast_ref::<std::io::Error>()
                .is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
