//! Alignment scoring and report rendering.

mod html;
mod markdown;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{AspectFinding, Verdict};
use crate::chunk_meta::provenance;
use crate::embed_store::{ScoredHit, Source};
use crate::retriever::{EvidenceBundle, RerankMode, SourceStats};

pub use html::render_html;
pub use markdown::render_markdown;

pub const SCHEMA_VERSION: u32 = 1;
/// `created_at` value used when output must be byte-stable.
pub const STABLE_CREATED_AT: &str = "1970-01-01T00:00:00Z";
/// The committed JSON schema for `report.json`.
pub const REPORT_SCHEMA: &str = include_str!("../../schema/report.schema.json");

pub const JSON_FILE: &str = "report.json";
pub const MARKDOWN_FILE: &str = "report.md";
pub const HTML_FILE: &str = "report.html";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write report to {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown report format `{0}` (expected json, md or html)")]
    UnknownFormat(String),
    #[error("report serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Format {
    Json,
    Markdown,
    Html,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Json, Format::Markdown, Format::Html];

    pub fn file_name(self) -> &'static str {
        match self {
            Self::Json => JSON_FILE,
            Self::Markdown => MARKDOWN_FILE,
            Self::Html => HTML_FILE,
        }
    }
}

impl std::str::FromStr for Format {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "md" | "markdown" => Ok(Self::Markdown),
            "html" => Ok(Self::Html),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

/// Numeric value of a verdict, or `None` when the finding does not count.
pub fn verdict_value(verdict: Verdict) -> Option<f64> {
    match verdict {
        Verdict::Match => Some(1.0),
        Verdict::Partial => Some(0.5),
        Verdict::Mismatch | Verdict::MissingInCode | Verdict::MissingInPaper => Some(0.0),
        Verdict::Unverifiable => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Excluded {
    Excluded,
}

/// A finding's weighted value, or the `"excluded"` marker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Contribution {
    Weighted(f64),
    Marker(Excluded),
}

impl Contribution {
    pub const EXCLUDED: Contribution = Contribution::Marker(Excluded::Excluded);

    pub fn value(self) -> Option<f64> {
        match self {
            Self::Weighted(v) => Some(v),
            Self::Marker(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownEntry {
    pub query_id: String,
    pub verdict: Verdict,
    pub weight: f64,
    pub contribution: Contribution,
}

/// Weighted mean of verdict values over the findings that count. `weights`
/// maps query ids to weights; absent ids weigh 1.
pub fn compute_score(
    findings: &[AspectFinding],
    weights: &BTreeMap<String, f64>,
) -> (Option<f64>, Vec<BreakdownEntry>) {
    let breakdown: Vec<BreakdownEntry> = findings
        .iter()
        .map(|f| {
            let weight = weights.get(&f.query_id).copied().unwrap_or(1.0);
            let contribution = match verdict_value(f.verdict) {
                Some(v) => Contribution::Weighted(weight * v),
                None => Contribution::EXCLUDED,
            };
            BreakdownEntry {
                query_id: f.query_id.clone(),
                verdict: f.verdict,
                weight,
                contribution,
            }
        })
        .collect();
    (score_from_breakdown(&breakdown), breakdown)
}

fn score_from_breakdown(breakdown: &[BreakdownEntry]) -> Option<f64> {
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for entry in breakdown {
        if let Some(c) = entry.contribution.value() {
            numerator += c;
            denominator += entry.weight;
        }
    }
    (denominator > 0.0).then(|| numerator / denominator)
}

/// Recomputes the score of a (possibly deserialized) report from its
/// findings and the weights recorded in its breakdown.
pub fn recompute_score(report: &AlignmentReport) -> Option<f64> {
    let weights = report
        .score_breakdown
        .iter()
        .map(|b| (b.query_id.clone(), b.weight))
        .collect();
    compute_score(&report.findings, &weights).0
}

pub fn format_score(score: Option<f64>) -> String {
    match score {
        Some(s) => format!("{s:.3}"),
        None => "n/a".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub paper_title: String,
    pub paper_path: String,
    pub code_archive: String,
    pub created_at: String,
    pub tool_version: String,
    pub provider_fingerprints: BTreeMap<String, String>,
    pub preset: String,
    pub k: usize,
    pub rerank_mode: RerankMode,
    pub prompt_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub query_id: String,
    pub paper: SourceStats,
    pub code: SourceStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceEntry {
    pub query_id: String,
    pub source: Source,
    pub chunk_id: String,
    pub provenance: String,
    pub cosine: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerank_score: Option<f64>,
    pub body: String,
}

impl EvidenceEntry {
    fn from_hit(query_id: &str, source: Source, hit: &ScoredHit) -> Self {
        Self {
            query_id: query_id.to_string(),
            source,
            chunk_id: hit.chunk_id.clone(),
            provenance: provenance(source, &hit.metadata),
            cosine: hit.score,
            rerank_score: hit.rerank_score,
            body: hit.body.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub schema_version: u32,
    pub meta: ReportMeta,
    pub findings: Vec<AspectFinding>,
    pub alignment_score: Option<f64>,
    pub score_breakdown: Vec<BreakdownEntry>,
    pub retrieval_stats: Vec<QueryStats>,
    pub evidence: Vec<EvidenceEntry>,
    pub warnings: Vec<String>,
}

impl AlignmentReport {
    /// Assembles a report and scores it. Bundles supply retrieval stats and
    /// the evidence appendix.
    pub fn assemble(
        meta: ReportMeta,
        findings: Vec<AspectFinding>,
        weights: &BTreeMap<String, f64>,
        bundles: &[EvidenceBundle],
        warnings: Vec<String>,
    ) -> Self {
        let (alignment_score, score_breakdown) = compute_score(&findings, weights);
        let retrieval_stats = bundles
            .iter()
            .map(|b| QueryStats {
                query_id: b.query_id.clone(),
                paper: b.paper_stats,
                code: b.code_stats,
            })
            .collect();
        let evidence = bundles
            .iter()
            .flat_map(|b| {
                let paper = b
                    .paper_hits
                    .iter()
                    .map(|h| EvidenceEntry::from_hit(&b.query_id, Source::Paper, h));
                let code = b
                    .code_hits
                    .iter()
                    .map(|h| EvidenceEntry::from_hit(&b.query_id, Source::Code, h));
                paper.chain(code).collect::<Vec<_>>()
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            meta,
            findings,
            alignment_score,
            score_breakdown,
            retrieval_stats,
            evidence,
            warnings,
        }
    }

    pub fn verdict_counts(&self) -> BTreeMap<Verdict, usize> {
        let mut counts: BTreeMap<Verdict, usize> = Verdict::ALL.iter().map(|v| (*v, 0)).collect();
        for f in &self.findings {
            *counts.entry(f.verdict).or_default() += 1;
        }
        counts
    }

    pub fn evidence_for<'a>(
        &'a self,
        query_id: &'a str,
    ) -> impl Iterator<Item = &'a EvidenceEntry> + 'a {
        self.evidence.iter().filter(move |e| e.query_id == query_id)
    }
}

/// Which report section a finding belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Matches,
    Discrepancies,
    Unverified,
}

impl Section {
    pub fn of(verdict: Verdict) -> Self {
        match verdict {
            Verdict::Match => Self::Matches,
            Verdict::Unverifiable => Self::Unverified,
            _ => Self::Discrepancies,
        }
    }
}

/// Pretty-printed, newline-terminated JSON with fields in declaration order.
pub fn render_json(report: &AlignmentReport) -> Result<String, ReportError> {
    let mut out = serde_json::to_string_pretty(report)?;
    out.push('\n');
    Ok(out)
}

pub fn parse_json(text: &str) -> Result<AlignmentReport, serde_json::Error> {
    serde_json::from_str(text)
}

/// Writes the requested formats into `out_dir`. Everything is rendered and
/// staged in a sibling temp directory first, so a failure leaves no report
/// files behind.
pub fn render(
    report: &AlignmentReport,
    formats: &[Format],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReportError::Io { path, source }
    };
    let mut formats = formats.to_vec();
    formats.sort();
    formats.dedup();

    let mut rendered = Vec::with_capacity(formats.len());
    for format in &formats {
        let text = match format {
            Format::Json => render_json(report)?,
            Format::Markdown => render_markdown(report),
            Format::Html => render_html(report),
        };
        rendered.push((*format, text));
    }

    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let staging = tempfile::Builder::new()
        .prefix(".papercheck-staging-")
        .tempdir_in(out_dir)
        .map_err(io(out_dir))?;
    for (format, text) in &rendered {
        let path = staging.path().join(format.file_name());
        std::fs::write(&path, text).map_err(io(&path))?;
    }
    let mut written = Vec::with_capacity(rendered.len());
    for (format, _) in &rendered {
        let target = out_dir.join(format.file_name());
        std::fs::rename(staging.path().join(format.file_name()), &target).map_err(io(&target))?;
        written.push(target);
    }
    Ok(written)
}
