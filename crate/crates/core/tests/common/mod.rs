//! Fixture paths and random generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use papercheck::analyzer::{AspectFinding, Verdict};
use papercheck::embed_store::ScoredHit;
use papercheck::reporter::{AlignmentReport, ReportMeta, STABLE_CREATED_AT};
use papercheck::retriever::{EvidenceBundle, RerankMode, SourceStats};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

pub fn schema_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schema/report.schema.json")
}

const WORDS: &[&str] = &[
    "gate",
    "model",
    "layer",
    "loss",
    "the",
    "a",
    "of",
    "training",
    "rate",
    "data",
    "x",
    "y2",
    "héllo",
    "数据",
    "ε-greedy",
    "naïve",
    "batch",
    "0.001",
    "|pipe|",
    "<tag>",
    "`tick`",
    "#hash",
];

/// Between `lo` and `hi - 1` random words.
pub fn words<R: Rng>(rng: &mut R, lo: usize, hi: usize) -> String {
    let n = if lo + 1 >= hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    };
    (0..n)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Markdown with ATX headings, paragraphs (some far longer than any chunk),
/// lists and fenced code containing heading-like lines.
pub fn random_markdown<R: Rng>(rng: &mut R) -> String {
    let mut out = String::new();
    if rng.gen_bool(0.5) {
        out.push_str(&words(rng, 1, 40));
        out.push_str("\n\n");
    }
    for _ in 0..rng.gen_range(1..25) {
        match rng.gen_range(0..10) {
            0..=2 => {
                let level = rng.gen_range(1..=6);
                out.push_str(&format!("{} {}\n", "#".repeat(level), words(rng, 1, 6)));
                if rng.gen_bool(0.7) {
                    out.push('\n');
                }
            }
            3..=5 => {
                for _ in 0..rng.gen_range(1..6) {
                    out.push_str(&words(rng, 1, 30));
                    out.push('\n');
                }
                out.push('\n');
            }
            6 => {
                // One line, no break opportunities.
                out.push_str(&words(rng, 100, 500));
                out.push_str("\n\n");
            }
            7 => {
                for _ in 0..rng.gen_range(1..8) {
                    out.push_str(&format!("- {}\n", words(rng, 1, 10)));
                }
                out.push('\n');
            }
            _ => {
                let fence = if rng.gen_bool(0.8) { "```" } else { "````" };
                out.push_str(&format!("{fence}python\n"));
                for i in 0..rng.gen_range(1..40) {
                    if i % 7 == 3 {
                        out.push_str("# not a heading\n\n");
                    } else {
                        out.push_str(&format!("x{i} = {}\n", words(rng, 3, 4)));
                    }
                }
                out.push_str(fence);
                out.push('\n');
                if rng.gen_bool(0.5) {
                    out.push('\n');
                }
            }
        }
    }
    if rng.gen_bool(0.3) {
        out.pop();
    }
    out
}

fn hit(id: &str, body: &str, score: f64) -> ScoredHit {
    ScoredHit {
        chunk_id: id.to_string(),
        score,
        rerank_score: None,
        metadata: BTreeMap::new(),
        body: body.to_string(),
    }
}

pub fn bundle(query_id: &str, paper: &[&str], code: &[&str]) -> EvidenceBundle {
    let hits = |ids: &[&str]| -> Vec<ScoredHit> {
        ids.iter()
            .enumerate()
            .map(|(i, id)| hit(id, &format!("body of {id}"), 0.9 - i as f64 * 0.1))
            .collect()
    };
    EvidenceBundle {
        query_id: query_id.to_string(),
        paper_hits: hits(paper),
        code_hits: hits(code),
        rerank_mode: RerankMode::Lexical,
        context_char_budget: 8000,
        paper_stats: SourceStats {
            fetched: paper.len(),
            kept: paper.len(),
            budget_drops: 0,
        },
        code_stats: SourceStats {
            fetched: code.len(),
            kept: code.len(),
            budget_drops: 0,
        },
        warnings: vec![],
    }
}

pub fn meta() -> ReportMeta {
    ReportMeta {
        paper_title: "Random <paper> | test".into(),
        paper_path: "paper.md".into(),
        code_archive: "code.zip".into(),
        created_at: STABLE_CREATED_AT.into(),
        tool_version: "0.0.0".into(),
        provider_fingerprints: BTreeMap::from([("embedding".into(), "fp".into())]),
        preset: "all".into(),
        k: 5,
        rerank_mode: RerankMode::Lexical,
        prompt_version: "v1".into(),
    }
}

/// A report over `n` random findings with random weights and evidence.
/// With `all_unverifiable` every verdict is unverifiable.
pub fn random_report<R: Rng>(rng: &mut R, n: usize, all_unverifiable: bool) -> AlignmentReport {
    let mut findings = Vec::new();
    let mut weights = BTreeMap::new();
    let mut bundles = Vec::new();
    for i in 0..n {
        let id = format!("q{i:03}");
        let verdict = if all_unverifiable {
            Verdict::Unverifiable
        } else {
            *Verdict::ALL.choose(rng).unwrap()
        };
        let paper_ids: Vec<String> = (0..rng.gen_range(0..3))
            .map(|j| format!("paper#{i:02}{j}"))
            .collect();
        let code_ids: Vec<String> = (0..rng.gen_range(0..3))
            .map(|j| format!("src/m.py#{i:02}{j}"))
            .collect();
        let p: Vec<&str> = paper_ids.iter().map(String::as_str).collect();
        let c: Vec<&str> = code_ids.iter().map(String::as_str).collect();
        bundles.push(bundle(&id, &p, &c));
        weights.insert(id.clone(), rng.gen_range(0.05..5.0));
        findings.push(AspectFinding {
            query_id: id,
            paper_summary: words(rng, 0, 12),
            code_summary: words(rng, 0, 12),
            verdict,
            explanation: format!("{}\n{}", words(rng, 5, 6), words(rng, 5, 6)),
            paper_evidence: paper_ids.into_iter().take(1).collect(),
            code_evidence: code_ids.into_iter().take(1).collect(),
            warnings: if verdict == Verdict::Unverifiable || rng.gen_bool(0.2) {
                vec![words(rng, 4, 5)]
            } else {
                vec![]
            },
        });
    }
    let warnings = if rng.gen_bool(0.2) {
        vec![words(rng, 6, 7)]
    } else {
        vec![]
    };
    AlignmentReport::assemble(meta(), findings, &weights, &bundles, warnings)
}
