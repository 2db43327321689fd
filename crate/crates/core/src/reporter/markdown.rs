use std::fmt::Write;

use super::{format_score, AlignmentReport, Section};
use crate::analyzer::{AspectFinding, Verdict};

fn cell(text: &str) -> String {
    let text = text.trim();
    if text.is_empty() {
        return "-".to_string();
    }
    text.replace('\\', "\\\\")
        .replace('|', "\\|")
        .replace("\r\n", "\n")
        .replace('\n', "<br>")
}

/// A backtick fence longer than any backtick run inside `body`.
fn fence_for(body: &str) -> String {
    let mut longest = 0;
    let mut run = 0;
    for c in body.chars() {
        if c == '`' {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    "`".repeat((longest + 1).max(3))
}

fn in_section(report: &AlignmentReport, section: Section) -> Vec<&AspectFinding> {
    report
        .findings
        .iter()
        .filter(|f| Section::of(f.verdict) == section)
        .collect()
}

pub fn render_markdown(report: &AlignmentReport) -> String {
    let mut out = String::new();
    let meta = &report.meta;
    let _ = writeln!(out, "# Alignment report: {}\n", meta.paper_title.trim());

    out.push_str("## Metadata\n\n| Field | Value |\n|---|---|\n");
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
    for (field, value) in rows {
        let _ = writeln!(out, "| {field} | {} |", cell(&value));
    }

    let _ = writeln!(
        out,
        "\n## Alignment Summary\n\n**Alignment score:** {}\n\n| Verdict | Count |\n|---|---|",
        format_score(report.alignment_score)
    );
    for (verdict, count) in report.verdict_counts() {
        let _ = writeln!(out, "| {} | {count} |", verdict.as_str());
    }

    out.push_str("\n## Matches\n\n");
    let matches = in_section(report, Section::Matches);
    if matches.is_empty() {
        out.push_str("_None._\n");
    } else {
        out.push_str(
            "| Aspect | Paper summary | Code summary | Explanation |\n|---|---|---|---|\n",
        );
        for f in matches {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                cell(&f.query_id),
                cell(&f.paper_summary),
                cell(&f.code_summary),
                cell(&f.explanation)
            );
        }
    }

    out.push_str("\n## Discrepancies\n\n");
    let discrepancies = in_section(report, Section::Discrepancies);
    if discrepancies.is_empty() {
        out.push_str("_None._\n");
    } else {
        out.push_str("| Aspect | Verdict | Paper summary | Code summary | Explanation |\n|---|---|---|---|---|\n");
        for f in discrepancies {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                cell(&f.query_id),
                f.verdict.as_str(),
                cell(&f.paper_summary),
                cell(&f.code_summary),
                cell(&f.explanation)
            );
        }
    }

    out.push_str("\n## Unverified\n\n");
    let unverified = in_section(report, Section::Unverified);
    if unverified.is_empty() {
        out.push_str("_None._\n");
    } else {
        out.push_str("| Aspect | Reason |\n|---|---|\n");
        for f in unverified {
            let reason = f
                .warnings
                .first()
                .map(String::as_str)
                .unwrap_or(&f.explanation);
            let _ = writeln!(out, "| {} | {} |", cell(&f.query_id), cell(reason));
        }
    }

    let finding_warnings: Vec<_> = report
        .findings
        .iter()
        .filter(|f| f.verdict != Verdict::Unverifiable)
        .flat_map(|f| f.warnings.iter().map(move |w| (f.query_id.as_str(), w)))
        .collect();
    if !report.warnings.is_empty() || !finding_warnings.is_empty() {
        out.push_str("\n## Warnings\n\n");
        for w in &report.warnings {
            let _ = writeln!(out, "- {}", w.replace('\n', " "));
        }
        for (id, w) in finding_warnings {
            let _ = writeln!(out, "- `{id}`: {}", w.replace('\n', " "));
        }
    }

    out.push_str("\n## Appendix: Evidence\n");
    for f in &report.findings {
        let _ = writeln!(out, "\n### {}\n", f.query_id);
        let mut any = false;
        for e in report.evidence_for(&f.query_id) {
            any = true;
            let fence = fence_for(&e.body);
            let _ = writeln!(
                out,
                "<details><summary>{} <code>{}</code> ({}), cosine {:.4}</summary>\n\n{fence}\n{}\n{fence}\n\n</details>\n",
                e.source,
                e.chunk_id,
                e.provenance,
                e.cosine,
                e.body.trim_end()
            );
        }
        if !any {
            out.push_str("_No evidence retrieved._\n");
        }
    }
    out
}
