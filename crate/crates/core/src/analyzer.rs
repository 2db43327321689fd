//! Per-aspect comparison through a chat model.
//!
//! Each aspect gets one chat request carrying the question and both evidence
//! blocks. The reply must be a JSON object with a fixed set of fields; a
//! reply that fails validation is retried with a repair instruction, and an
//! aspect that never validates is recorded as `unverifiable`.

use std::collections::{HashMap, HashSet, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use async_trait::async_trait;
use futures::{StreamExt, TryStreamExt};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::chunk_meta::provenance;
use crate::embed_store::{ScoredHit, Source};
use crate::http::{HttpError, JsonClient};
use crate::retriever::{EvidenceBundle, QuerySpec};

pub const PROMPT_VERSION: &str = "v1";
pub const SYSTEM_PROMPT: &str = include_str!("../prompts/system_v1.txt");
pub const USER_TEMPLATE: &str = include_str!("../prompts/user_v1.txt");
pub const REPAIR_TEMPLATE: &str = include_str!("../prompts/repair_v1.txt");

/// Repair attempts after the first reply.
pub const MAX_REPAIRS: usize = 2;
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 1024;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("chat backend unreachable: {0}")]
    Unreachable(String),
    #[error("chat backend rejected the request: {0}")]
    Rejected(String),
    #[error("mock script has no responses for query `{0}`")]
    MockMissingScript(String),
}

#[derive(Debug, Error)]
pub enum AnalyzeError {
    #[error("aspect `{query_id}`: {source}")]
    BackendUnreachable {
        query_id: String,
        #[source]
        source: BackendError,
    },
    #[error("mock script has no responses for query `{0}`")]
    MockMissingScript(String),
    #[error("evidence bundle for `{bundle}` does not belong to query `{query}`")]
    QueryMismatch { query: String, bundle: String },
    #[error("cannot load mock script {path}: {reason}")]
    MockScriptUnreadable { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

/// A chat model. `query_id` lets scripted backends pick their replies;
/// remote backends ignore it.
#[async_trait]
pub trait ChatBackend: Send + Sync {
    fn describe(&self) -> String;
    async fn complete(
        &self,
        query_id: &str,
        messages: &[ChatMessage],
    ) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmSettings {
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl LlmSettings {
    pub fn new(model_name: impl Into<String>) -> Self {
        Self {
            model_name: model_name.into(),
            temperature: 0.0,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }
}

/// OpenAI-style chat completions over HTTP.
#[derive(Debug, Clone)]
pub struct RemoteChat {
    client: JsonClient,
    settings: LlmSettings,
}

impl RemoteChat {
    pub fn new(client: JsonClient, settings: LlmSettings) -> Self {
        Self { client, settings }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
    response_format: Value,
}

#[async_trait]
impl ChatBackend for RemoteChat {
    fn describe(&self) -> String {
        format!("remote:{}", self.settings.model_name)
    }

    async fn complete(
        &self,
        _query_id: &str,
        messages: &[ChatMessage],
    ) -> Result<String, BackendError> {
        let request = ChatRequest {
            model: &self.settings.model_name,
            messages,
            temperature: self.settings.temperature,
            max_tokens: self.settings.max_output_tokens,
            response_format: serde_json::json!({"type": "json_object"}),
        };
        let response = self.client.post(&request).await.map_err(|e| match e {
            HttpError::Unreachable { .. } => BackendError::Unreachable(e.to_string()),
            other => BackendError::Rejected(other.to_string()),
        })?;
        response
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| {
                BackendError::Rejected("response has no choices[0].message.content".into())
            })
    }
}

/// Replays canned replies per query id, in order. Once a list is exhausted
/// its last reply repeats.
#[derive(Debug, Default)]
pub struct ScriptedMock {
    script: Mutex<HashMap<String, VecDeque<String>>>,
}

impl ScriptedMock {
    pub fn new(script: HashMap<String, Vec<String>>) -> Self {
        Self {
            script: Mutex::new(script.into_iter().map(|(k, v)| (k, v.into())).collect()),
        }
    }

    /// Loads a JSON object mapping query ids to lists of replies. A reply
    /// may be a string (sent verbatim) or any other JSON value (sent as its
    /// compact serialization).
    pub fn from_file(path: &Path) -> Result<Self, AnalyzeError> {
        let unreadable = |reason: String| AnalyzeError::MockScriptUnreadable {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| unreadable(e.to_string()))?;
        let raw: HashMap<String, Vec<Value>> =
            serde_json::from_str(&text).map_err(|e| unreadable(e.to_string()))?;
        let script = raw
            .into_iter()
            .map(|(id, replies)| {
                let replies = replies
                    .into_iter()
                    .map(|r| match r {
                        Value::String(s) => s,
                        other => other.to_string(),
                    })
                    .collect();
                (id, replies)
            })
            .collect();
        Ok(Self::new(script))
    }
}

#[async_trait]
impl ChatBackend for ScriptedMock {
    fn describe(&self) -> String {
        "scripted-mock".to_string()
    }

    async fn complete(
        &self,
        query_id: &str,
        _messages: &[ChatMessage],
    ) -> Result<String, BackendError> {
        let mut script = self.script.lock().expect("mock script lock");
        let replies = script
            .get_mut(query_id)
            .filter(|r| !r.is_empty())
            .ok_or_else(|| BackendError::MockMissingScript(query_id.to_string()))?;
        if replies.len() > 1 {
            Ok(replies.pop_front().expect("non-empty"))
        } else {
            Ok(replies[0].clone())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Match,
    Partial,
    Mismatch,
    MissingInCode,
    MissingInPaper,
    Unverifiable,
}

impl Verdict {
    pub const ALL: [Verdict; 6] = [
        Verdict::Match,
        Verdict::Partial,
        Verdict::Mismatch,
        Verdict::MissingInCode,
        Verdict::MissingInPaper,
        Verdict::Unverifiable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Match => "match",
            Self::Partial => "partial",
            Self::Mismatch => "mismatch",
            Self::MissingInCode => "missing_in_code",
            Self::MissingInPaper => "missing_in_paper",
            Self::Unverifiable => "unverifiable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectFinding {
    pub query_id: String,
    pub paper_summary: String,
    pub code_summary: String,
    pub verdict: Verdict,
    pub explanation: String,
    pub paper_evidence: Vec<String>,
    pub code_evidence: Vec<String>,
    pub warnings: Vec<String>,
}

impl AspectFinding {
    fn unverifiable(query_id: &str, explanation: impl Into<String>, warnings: Vec<String>) -> Self {
        Self {
            query_id: query_id.to_string(),
            paper_summary: String::new(),
            code_summary: String::new(),
            verdict: Verdict::Unverifiable,
            explanation: explanation.into(),
            paper_evidence: Vec::new(),
            code_evidence: Vec::new(),
            warnings,
        }
    }
}

/// The reply object the model must produce.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelReply {
    paper_summary: String,
    code_summary: String,
    verdict: Verdict,
    explanation: String,
    paper_evidence: Vec<String>,
    code_evidence: Vec<String>,
}

/// Parses and validates a model reply. A single surrounding markdown code
/// fence is tolerated.
fn parse_reply(raw: &str) -> Result<ModelReply, String> {
    let mut text = raw.trim();
    if let Some(rest) = text.strip_prefix("```") {
        let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphanumeric());
        text = rest.strip_suffix("```").unwrap_or(rest).trim();
    }
    let value: Value =
        serde_json::from_str(text).map_err(|e| format!("reply is not valid JSON ({e})"))?;
    if !value.is_object() {
        return Err("reply must be a JSON object".to_string());
    }
    serde_json::from_value(value).map_err(|e| format!("reply does not match the schema ({e})"))
}

/// Substitutes `{name}` placeholders in one pass, so placeholder-like text
/// inside substituted values is left alone.
pub fn render_template(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'outer: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        for (name, value) in values {
            if let Some(tail) = after.strip_prefix(name).and_then(|t| t.strip_prefix('}')) {
                out.push_str(value);
                rest = tail;
                continue 'outer;
            }
        }
        out.push('{');
        rest = after;
    }
    out.push_str(rest);
    out
}

fn evidence_block(source: Source, hits: &[ScoredHit]) -> String {
    if hits.is_empty() {
        return "(no evidence retrieved)".to_string();
    }
    hits.iter()
        .map(|h| {
            format!(
                "[{}] ({})\n{}",
                h.chunk_id,
                provenance(source, &h.metadata),
                h.body.trim_end()
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Messages for the first request of an aspect.
pub fn build_messages(bundle: &EvidenceBundle, query: &QuerySpec) -> Vec<ChatMessage> {
    let paper = evidence_block(Source::Paper, &bundle.paper_hits);
    let code = evidence_block(Source::Code, &bundle.code_hits);
    let user = render_template(
        USER_TEMPLATE,
        &[
            ("question", &query.question),
            ("paper_evidence", &paper),
            ("code_evidence", &code),
        ],
    );
    vec![
        ChatMessage::new(Role::System, SYSTEM_PROMPT),
        ChatMessage::new(Role::User, user),
    ]
}

#[derive(Debug, Clone, Copy)]
pub struct AnalyzeOptions {
    /// Turn backend outages into unverifiable findings instead of aborting.
    pub keep_going: bool,
    pub concurrency: usize,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            keep_going: false,
            concurrency: 1,
        }
    }
}

/// Asks the backend to compare paper and code evidence for one aspect.
pub async fn analyze_aspect(
    bundle: &EvidenceBundle,
    query: &QuerySpec,
    backend: &dyn ChatBackend,
    options: AnalyzeOptions,
) -> Result<AspectFinding, AnalyzeError> {
    if bundle.query_id != query.query_id {
        return Err(AnalyzeError::QueryMismatch {
            query: query.query_id.clone(),
            bundle: bundle.query_id.clone(),
        });
    }
    let query_id = query.query_id.as_str();
    let mut messages = build_messages(bundle, query);
    let mut warnings = Vec::new();
    let mut attempt = 0;
    let reply = loop {
        let raw = match backend.complete(query_id, &messages).await {
            Ok(raw) => raw,
            Err(BackendError::MockMissingScript(id)) => {
                return Err(AnalyzeError::MockMissingScript(id))
            }
            Err(source) if options.keep_going => {
                warnings.push(format!("backend failure: {source}"));
                return Ok(AspectFinding::unverifiable(
                    query_id,
                    "The model backend could not be reached for this aspect.",
                    warnings,
                ));
            }
            Err(source) => {
                return Err(AnalyzeError::BackendUnreachable {
                    query_id: query_id.to_string(),
                    source,
                })
            }
        };
        match parse_reply(&raw) {
            Ok(reply) => break reply,
            Err(error) if attempt < MAX_REPAIRS => {
                attempt += 1;
                warnings.push(format!("repair retry {attempt}: {error}"));
                messages.push(ChatMessage::new(Role::Assistant, raw));
                messages.push(ChatMessage::new(
                    Role::User,
                    render_template(REPAIR_TEMPLATE, &[("error", &error)]),
                ));
            }
            Err(error) => {
                warnings.push(format!(
                    "reply failed validation after {} attempts: {error}",
                    attempt + 1
                ));
                warnings.push(format!("raw reply: {raw}"));
                return Ok(AspectFinding::unverifiable(
                    query_id,
                    "The model did not produce a valid structured answer.",
                    warnings,
                ));
            }
        }
    };

    let mut finding = AspectFinding {
        query_id: query_id.to_string(),
        paper_summary: reply.paper_summary,
        code_summary: reply.code_summary,
        verdict: reply.verdict,
        explanation: reply.explanation,
        paper_evidence: keep_retrieved(
            reply.paper_evidence,
            &bundle.paper_hits,
            Source::Paper,
            &mut warnings,
        ),
        code_evidence: keep_retrieved(
            reply.code_evidence,
            &bundle.code_hits,
            Source::Code,
            &mut warnings,
        ),
        warnings,
    };
    enforce_evidence_rules(&mut finding, bundle, query);
    Ok(finding)
}

/// Drops cited ids that were not retrieved (and duplicates), with a warning.
fn keep_retrieved(
    cited: Vec<String>,
    hits: &[ScoredHit],
    source: Source,
    warnings: &mut Vec<String>,
) -> Vec<String> {
    let retrieved: HashSet<&str> = hits.iter().map(|h| h.chunk_id.as_str()).collect();
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    for id in cited {
        if !retrieved.contains(id.as_str()) {
            warnings.push(format!(
                "stripped {source} evidence `{id}`: not among the retrieved chunks"
            ));
        } else if seen.insert(id.clone()) {
            kept.push(id);
        }
    }
    kept
}

fn enforce_evidence_rules(finding: &mut AspectFinding, bundle: &EvidenceBundle, query: &QuerySpec) {
    let paper_empty = query.targets.contains(&Source::Paper) && bundle.paper_hits.is_empty();
    let code_empty = query.targets.contains(&Source::Code) && bundle.code_hits.is_empty();
    let allowed: &[Verdict] = match (paper_empty, code_empty) {
        (true, true) => &[Verdict::Unverifiable],
        (true, false) => &[Verdict::MissingInPaper, Verdict::Unverifiable],
        (false, true) => &[Verdict::MissingInCode, Verdict::Unverifiable],
        (false, false) => &Verdict::ALL,
    };
    if !allowed.contains(&finding.verdict) {
        let forced = allowed[0];
        finding.warnings.push(format!(
            "verdict overridden from {} to {}: no {} evidence was retrieved",
            finding.verdict.as_str(),
            forced.as_str(),
            match (paper_empty, code_empty) {
                (true, true) => "paper or code",
                (true, false) => "paper",
                _ => "code",
            }
        ));
        finding.verdict = forced;
    }
    if finding.verdict == Verdict::Unverifiable && finding.warnings.is_empty() {
        finding
            .warnings
            .push("the model judged the evidence insufficient to decide".to_string());
    }
}

/// Analyzes every aspect, at most `options.concurrency` at a time. Findings
/// come back in query order.
pub async fn run_battery(
    queries: &[QuerySpec],
    bundles: &[EvidenceBundle],
    backend: &dyn ChatBackend,
    options: AnalyzeOptions,
) -> Result<Vec<AspectFinding>, AnalyzeError> {
    if let Some((q, b)) = queries
        .iter()
        .zip(bundles)
        .find(|(q, b)| q.query_id != b.query_id)
    {
        return Err(AnalyzeError::QueryMismatch {
            query: q.query_id.clone(),
            bundle: b.query_id.clone(),
        });
    }
    if queries.len() != bundles.len() {
        return Err(AnalyzeError::QueryMismatch {
            query: format!("{} queries", queries.len()),
            bundle: format!("{} bundles", bundles.len()),
        });
    }
    futures::stream::iter(queries.iter().zip(bundles))
        .map(|(q, b)| analyze_aspect(b, q, backend, options))
        .buffered(options.concurrency.max(1))
        .try_collect()
        .await
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use serde_json::json;

    use super::*;
    use crate::retriever::{RerankMode, SourceStats};

    fn block_on<F: std::future::Future>(f: F) -> F::Output {
        tokio::runtime::Builder::new_current_thread()
            .build()
            .unwrap()
            .block_on(f)
    }

    fn hit(id: &str) -> ScoredHit {
        ScoredHit {
            chunk_id: id.into(),
            score: 0.5,
            rerank_score: Some(0.5),
            metadata: BTreeMap::new(),
            body: format!("body of {id}"),
        }
    }

    fn bundle(id: &str, paper: &[&str], code: &[&str]) -> EvidenceBundle {
        EvidenceBundle {
            query_id: id.into(),
            paper_hits: paper.iter().map(|p| hit(p)).collect(),
            code_hits: code.iter().map(|c| hit(c)).collect(),
            rerank_mode: RerankMode::Lexical,
            context_char_budget: 8000,
            paper_stats: SourceStats::default(),
            code_stats: SourceStats::default(),
            warnings: Vec::new(),
        }
    }

    fn query(id: &str) -> QuerySpec {
        QuerySpec {
            query_id: id.into(),
            question: "What hyperparameters are suggested for training?".into(),
            weight: 1.0,
            targets: [Source::Paper, Source::Code].into(),
            preset_tags: Default::default(),
        }
    }

    fn reply(verdict: &str, paper: &[&str], code: &[&str]) -> String {
        json!({
            "paper_summary": "lr 3e-4",
            "code_summary": "lr 3e-4",
            "verdict": verdict,
            "explanation": "same value",
            "paper_evidence": paper,
            "code_evidence": code,
        })
        .to_string()
    }

    fn mock(id: &str, replies: Vec<String>) -> ScriptedMock {
        ScriptedMock::new(HashMap::from([(id.to_string(), replies)]))
    }

    #[test]
    fn valid_reply_passes_through() {
        let b = bundle("hparams", &["p1"], &["c1"]);
        let m = mock("hparams", vec![reply("match", &["p1"], &["c1"])]);
        let f = block_on(analyze_aspect(
            &b,
            &query("hparams"),
            &m,
            AnalyzeOptions::default(),
        ))
        .unwrap();
        assert_eq!(f.verdict, Verdict::Match);
        assert_eq!(f.paper_evidence, ["p1"]);
        assert_eq!(f.code_evidence, ["c1"]);
        assert!(f.warnings.is_empty());
    }

    #[test]
    fn two_bad_replies_then_valid() {
        let b = bundle("hparams", &["p1"], &["c1"]);
        let m = mock(
            "hparams",
            vec![
                "not json".into(),
                "{\"verdict\": \"match\"}".into(),
                reply("partial", &["p1"], &[]),
            ],
        );
        let f = block_on(analyze_aspect(
            &b,
            &query("hparams"),
            &m,
            AnalyzeOptions::default(),
        ))
        .unwrap();
        assert_eq!(f.verdict, Verdict::Partial);
        let retries: Vec<_> = f
            .warnings
            .iter()
            .filter(|w| w.starts_with("repair retry"))
            .collect();
        assert_eq!(retries.len(), 2);
    }

    #[test]
    fn persistent_garbage_is_unverifiable() {
        let b = bundle("hparams", &["p1"], &["c1"]);
        let m = mock("hparams", vec!["garbage".into()]);
        let f = block_on(analyze_aspect(
            &b,
            &query("hparams"),
            &m,
            AnalyzeOptions::default(),
        ))
        .unwrap();
        assert_eq!(f.verdict, Verdict::Unverifiable);
        assert!(f.warnings.iter().any(|w| w == "raw reply: garbage"));
    }

    #[test]
    fn empty_code_evidence_overrides_match() {
        let b = bundle("hparams", &["p1"], &[]);
        let m = mock("hparams", vec![reply("match", &["p1"], &[])]);
        let f = block_on(analyze_aspect(
            &b,
            &query("hparams"),
            &m,
            AnalyzeOptions::default(),
        ))
        .unwrap();
        assert_eq!(f.verdict, Verdict::MissingInCode);
        assert!(f.warnings.iter().any(|w| w.contains("overridden")));
    }

    #[test]
    fn both_sides_empty_is_unverifiable() {
        let b = bundle("hparams", &[], &[]);
        let m = mock("hparams", vec![reply("missing_in_code", &[], &[])]);
        let f = block_on(analyze_aspect(
            &b,
            &query("hparams"),
            &m,
            AnalyzeOptions::default(),
        ))
        .unwrap();
        assert_eq!(f.verdict, Verdict::Unverifiable);
        assert!(!f.warnings.is_empty());
    }

    #[test]
    fn unknown_evidence_ids_are_stripped() {
        let b = bundle("hparams", &["p1"], &["c1"]);
        let m = mock(
            "hparams",
            vec![reply("match", &["p1", "p9", "p1"], &["c7"])],
        );
        let f = block_on(analyze_aspect(
            &b,
            &query("hparams"),
            &m,
            AnalyzeOptions::default(),
        ))
        .unwrap();
        assert_eq!(f.paper_evidence, ["p1"]);
        assert!(f.code_evidence.is_empty());
        assert_eq!(f.warnings.len(), 2);
    }

    #[test]
    fn extra_fields_fail_validation() {
        let mut v: Value = serde_json::from_str(&reply("match", &[], &[])).unwrap();
        v["confidence"] = json!(0.9);
        let err = parse_reply(&v.to_string()).unwrap_err();
        assert!(err.contains("confidence"), "{err}");
        assert!(parse_reply("[1, 2]").is_err());
        assert!(parse_reply(&reply("great", &[], &[])).is_err());
    }

    #[test]
    fn fenced_reply_is_accepted() {
        let fenced = format!("```json\n{}\n```", reply("match", &[], &[]));
        assert!(parse_reply(&fenced).is_ok());
    }

    #[test]
    fn missing_script_is_an_error() {
        let b = bundle("arch", &["p1"], &["c1"]);
        let m = mock("hparams", vec![reply("match", &[], &[])]);
        let err = block_on(analyze_aspect(
            &b,
            &query("arch"),
            &m,
            AnalyzeOptions::default(),
        ))
        .unwrap_err();
        assert!(matches!(err, AnalyzeError::MockMissingScript(ref id) if id == "arch"));
    }

    struct DownBackend;

    #[async_trait]
    impl ChatBackend for DownBackend {
        fn describe(&self) -> String {
            "down".into()
        }
        async fn complete(&self, _: &str, _: &[ChatMessage]) -> Result<String, BackendError> {
            Err(BackendError::Unreachable("connection refused".into()))
        }
    }

    #[test]
    fn outage_aborts_unless_keep_going() {
        let b = bundle("hparams", &["p1"], &["c1"]);
        let q = query("hparams");
        let err = block_on(analyze_aspect(
            &b,
            &q,
            &DownBackend,
            AnalyzeOptions::default(),
        ))
        .unwrap_err();
        assert!(matches!(err, AnalyzeError::BackendUnreachable { .. }));
        let opts = AnalyzeOptions {
            keep_going: true,
            ..Default::default()
        };
        let f = block_on(analyze_aspect(&b, &q, &DownBackend, opts)).unwrap();
        assert_eq!(f.verdict, Verdict::Unverifiable);
        assert!(!f.warnings.is_empty());
    }

    #[test]
    fn battery_keeps_query_order_and_isolates_failures() {
        let ids = ["a", "b", "c", "d", "e", "f", "g"];
        let queries: Vec<_> = ids.iter().map(|id| query(id)).collect();
        let bundles: Vec<_> = ids.iter().map(|id| bundle(id, &["p1"], &["c1"])).collect();
        let script: HashMap<String, Vec<String>> = ids
            .iter()
            .map(|id| {
                let r = if *id == "d" {
                    "nope".to_string()
                } else {
                    reply("match", &["p1"], &["c1"])
                };
                (id.to_string(), vec![r])
            })
            .collect();
        let opts = AnalyzeOptions {
            keep_going: true,
            concurrency: 3,
        };
        let run = || {
            block_on(run_battery(
                &queries,
                &bundles,
                &ScriptedMock::new(script.clone()),
                opts,
            ))
            .unwrap()
        };
        let findings = run();
        let order: Vec<_> = findings.iter().map(|f| f.query_id.as_str()).collect();
        assert_eq!(order, ids);
        assert_eq!(
            findings
                .iter()
                .filter(|f| f.verdict == Verdict::Unverifiable)
                .count(),
            1
        );
        assert_eq!(findings[3].verdict, Verdict::Unverifiable);
        let again = run();
        assert_eq!(
            serde_json::to_string(&findings).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn template_substitution_is_single_pass() {
        let out = render_template(
            "Q: {question} / {paper_evidence} / {x}",
            &[("question", "{paper_evidence}"), ("paper_evidence", "P")],
        );
        assert_eq!(out, "Q: {paper_evidence} / P / {x}");
    }

    #[test]
    fn prompt_carries_evidence_provenance() {
        let mut b = bundle("hparams", &["paper#0001"], &["src/train.py#000"]);
        b.paper_hits[0]
            .metadata
            .insert("section_path".into(), "Method > Training".into());
        b.code_hits[0].metadata.extend([
            ("rel_path".to_string(), "src/train.py".to_string()),
            ("line_start".to_string(), "1".to_string()),
            ("line_end".to_string(), "12".to_string()),
        ]);
        let messages = build_messages(&b, &query("hparams"));
        assert_eq!(messages[0].role, Role::System);
        let user = &messages[1].content;
        assert!(user.contains("[paper#0001] (section: Method > Training)"));
        assert!(user.contains("[src/train.py#000] (src/train.py:1-12)"));
        assert!(user.contains("What hyperparameters are suggested for training?"));
    }

    #[test]
    fn mock_file_accepts_strings_and_objects() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mock.json");
        std::fs::write(&path, r#"{"a": ["raw text", {"verdict": "match"}]}"#).unwrap();
        let m = ScriptedMock::from_file(&path).unwrap();
        assert_eq!(block_on(m.complete("a", &[])).unwrap(), "raw text");
        assert_eq!(
            block_on(m.complete("a", &[])).unwrap(),
            r#"{"verdict":"match"}"#
        );
        assert_eq!(
            block_on(m.complete("a", &[])).unwrap(),
            r#"{"verdict":"match"}"#
        );
    }
}
