use std::fmt::Write;

use super::{format_score, AlignmentReport, EvidenceEntry, Section};
use crate::analyzer::{AspectFinding, Verdict};

const STYLE: &str = r#"
body { font-family: system-ui, -apple-system, "Segoe UI", sans-serif; margin: 2rem auto; max-width: 70rem; padding: 0 1rem; color: #1f2328; background: #fff; line-height: 1.45; }
h1 { font-size: 1.6rem; margin-bottom: 0.2rem; }
h2 { border-bottom: 1px solid #d0d7de; padding-bottom: 0.2rem; margin-top: 2rem; }
table { border-collapse: collapse; margin: 0.5rem 0; }
th, td { border: 1px solid #d0d7de; padding: 0.3rem 0.6rem; text-align: left; vertical-align: top; }
th { background: #f6f8fa; }
.score { font-size: 2rem; font-weight: 700; }
.badge { display: inline-block; padding: 0.05rem 0.5rem; border-radius: 0.8rem; font-size: 0.8rem; font-weight: 600; color: #fff; }
.v-match { background: #1a7f37; }
.v-partial { background: #9a6700; }
.v-mismatch { background: #cf222e; }
.v-missing_in_code, .v-missing_in_paper { background: #bc4c00; }
.v-unverifiable { background: #6e7781; }
details.finding { border: 1px solid #d0d7de; border-radius: 6px; margin: 0.5rem 0; padding: 0.4rem 0.8rem; }
details.finding > summary { cursor: pointer; font-weight: 600; }
.evidence { margin: 0.4rem 0 0.8rem; }
.prov { color: #57606a; font-size: 0.85rem; }
pre { background: #f6f8fa; padding: 0.6rem; overflow-x: auto; white-space: pre-wrap; font-size: 0.85rem; }
.none { color: #57606a; font-style: italic; }
ul.warnings li { color: #9a6700; }
"#;

fn esc(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

fn badge(verdict: Verdict) -> String {
    format!("<span class=\"badge v-{0}\">{0}</span>", verdict.as_str())
}

fn evidence_item(out: &mut String, e: &EvidenceEntry) {
    let rerank = e
        .rerank_score
        .map(|r| format!(", rerank {r:.3}"))
        .unwrap_or_default();
    let _ = writeln!(
        out,
        "<div class=\"evidence\"><div class=\"prov\"><code>{}</code> &middot; {} &middot; cosine {:.4}{}</div><pre>{}</pre></div>",
        esc(&e.chunk_id),
        esc(&e.provenance),
        e.cosine,
        rerank,
        esc(e.body.trim_end())
    );
}

fn finding_block(out: &mut String, report: &AlignmentReport, f: &AspectFinding) {
    let _ = writeln!(
        out,
        "<details class=\"finding\" id=\"finding-{0}\"><summary>{0} {1}</summary>",
        esc(&f.query_id),
        badge(f.verdict)
    );
    let _ = write!(
        out,
        "<h4>Paper</h4><p>{}</p>\n<h4>Code</h4><p>{}</p>\n<h4>Explanation</h4><p>{}</p>\n",
        esc(&f.paper_summary),
        esc(&f.code_summary),
        esc(&f.explanation)
    );
    if !f.warnings.is_empty() {
        out.push_str("<ul class=\"warnings\">");
        for w in &f.warnings {
            let _ = write!(out, "<li>{}</li>", esc(w));
        }
        out.push_str("</ul>\n");
    }
    let evidence: Vec<_> = report.evidence_for(&f.query_id).collect();
    if evidence.is_empty() {
        out.push_str("<p class=\"none\">No evidence retrieved.</p>\n");
    } else {
        for source in ["paper", "code"] {
            let items: Vec<_> = evidence
                .iter()
                .filter(|e| e.source.as_str() == source)
                .collect();
            if items.is_empty() {
                continue;
            }
            let _ = writeln!(
                out,
                "<h4>{} evidence</h4>",
                if source == "paper" { "Paper" } else { "Code" }
            );
            for e in items {
                evidence_item(out, e);
            }
        }
    }
    out.push_str("</details>\n");
}

/// A single self-contained page: inline styles, no scripts, no external
/// resources. Findings collapse with `<details>`, which needs no scripting.
pub fn render_html(report: &AlignmentReport) -> String {
    let meta = &report.meta;
    let mut out = String::new();
    out.push_str("<!doctype html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    let _ = writeln!(
        out,
        "<title>Alignment report: {}</title>",
        esc(&meta.paper_title)
    );
    let _ = write!(out, "<style>{STYLE}</style>\n</head>\n<body>\n");
    let _ = writeln!(out, "<h1>Alignment report: {}</h1>", esc(&meta.paper_title));

    out.push_str("<section id=\"metadata\"><h2>Metadata</h2>\n<table>\n");
    let mut rows = vec![
        ("Paper", meta.paper_path.clone()),
        ("Code archive", meta.code_archive.clone()),
        ("Created at", meta.created_at.clone()),
        ("Tool version", meta.tool_version.clone()),
        ("Preset", meta.preset.clone()),
        ("k", meta.k.to_string()),
        ("Rerank mode", meta.rerank_mode.as_str().to_string()),
        ("Prompt version", meta.prompt_version.clone()),
    ];
    for (name, fp) in &meta.provider_fingerprints {
        rows.push(("Provider", format!("{name}: {fp}")));
    }
    for (k, v) in rows {
        let _ = writeln!(out, "<tr><th>{k}</th><td>{}</td></tr>", esc(&v));
    }
    out.push_str("</table></section>\n");

    let _ = write!(
        out,
        "<section id=\"summary\"><h2>Alignment Summary</h2>\n<p class=\"score\">{}</p>\n<table><tr><th>Verdict</th><th>Count</th></tr>\n",
        format_score(report.alignment_score)
    );
    for (verdict, count) in report.verdict_counts() {
        let _ = writeln!(out, "<tr><td>{}</td><td>{count}</td></tr>", badge(verdict));
    }
    out.push_str("</table></section>\n");

    for (section, id, title) in [
        (Section::Matches, "matches", "Matches"),
        (Section::Discrepancies, "discrepancies", "Discrepancies"),
        (Section::Unverified, "unverified", "Unverified"),
    ] {
        let _ = writeln!(out, "<section id=\"{id}\"><h2>{title}</h2>");
        let members: Vec<_> = report
            .findings
            .iter()
            .filter(|f| Section::of(f.verdict) == section)
            .collect();
        if members.is_empty() {
            out.push_str("<p class=\"none\">None.</p>\n");
        }
        for f in members {
            finding_block(&mut out, report, f);
        }
        out.push_str("</section>\n");
    }

    if !report.warnings.is_empty() {
        out.push_str("<section id=\"warnings\"><h2>Warnings</h2>\n<ul class=\"warnings\">");
        for w in &report.warnings {
            let _ = write!(out, "<li>{}</li>", esc(w));
        }
        out.push_str("</ul></section>\n");
    }
    out.push_str("</body>\n</html>\n");
    out
}
