//! Paper loading and heading-aware segmentation.
//!
//! A paper arrives as markdown (or plain text), or as a PDF that an external
//! converter turns into markdown. Segmentation cuts the text at every ATX
//! heading outside fenced code, then splits oversized sections at paragraph
//! boundaries. Continuation pieces repeat the tail of their predecessor so
//! that retrieval does not lose context at the cut.
//!
//! Offsets (`char_start`, `char_end`, `overlap_len`) are byte offsets into
//! [`PaperDocument::raw_text`]; size limits are counted in characters.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MAX_CHUNK_CHARS: usize = 4000;
pub const DEFAULT_OVERLAP_CHARS: usize = 200;
pub const MIN_CHUNK_CHARS: usize = 200;

#[derive(Debug, Error)]
pub enum PaperError {
    #[error("paper not found: {0}")]
    FileNotFound(PathBuf),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} is a PDF but no converter command is configured (use --converter)")]
    PdfWithoutConverter(PathBuf),
    #[error("converter failed on {path}: {reason}")]
    ConverterFailed { path: PathBuf, reason: String },
    #[error("{0} contains no text")]
    EmptyDocument(PathBuf),
    #[error("invalid paper chunking parameters: {0}")]
    InvalidChunking(String),
}

/// A markdown rendering of the paper.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaperDocument {
    pub source_path: PathBuf,
    pub title: String,
    pub raw_text: String,
    pub byte_length: usize,
}

impl PaperDocument {
    /// Builds a document from markdown text. Setext headings are rewritten
    /// as ATX headings before anything else looks at the text.
    pub fn from_markdown(source_path: impl Into<PathBuf>, text: &str) -> Result<Self, PaperError> {
        let source_path = source_path.into();
        if text.trim().is_empty() {
            return Err(PaperError::EmptyDocument(source_path));
        }
        let raw_text = normalize_setext(text);
        let title = first_title(&raw_text).unwrap_or_else(|| file_stem(&source_path));
        let title = if title.is_empty() {
            "untitled".to_string()
        } else {
            title
        };
        Ok(Self {
            byte_length: raw_text.len(),
            source_path,
            title,
            raw_text,
        })
    }

    /// Stem used as the prefix of chunk ids.
    pub fn id_stem(&self) -> String {
        file_stem(&self.source_path)
    }
}

/// External PDF-to-markdown command. The template is split shell-style and
/// every `{}` is replaced by the input path; without a placeholder the path
/// is appended as the last argument. The command must print markdown on
/// standard output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Converter {
    template: String,
}

impl Converter {
    pub fn new(template: impl Into<String>) -> Self {
        Self {
            template: template.into(),
        }
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    fn argv(&self, input: &Path) -> Option<Vec<String>> {
        let parts = shlex::split(&self.template)?;
        if parts.is_empty() {
            return None;
        }
        let input = input.to_string_lossy();
        let has_placeholder = parts.iter().any(|p| p.contains("{}"));
        let mut argv: Vec<String> = parts.iter().map(|p| p.replace("{}", &input)).collect();
        if !has_placeholder {
            argv.push(input.into_owned());
        }
        Some(argv)
    }

    fn convert(&self, input: &Path) -> Result<String, PaperError> {
        let failed = |reason: String| PaperError::ConverterFailed {
            path: input.to_path_buf(),
            reason,
        };
        let argv = self.argv(input).ok_or_else(|| {
            failed(format!(
                "cannot parse converter command `{}`",
                self.template
            ))
        })?;
        let output = Command::new(&argv[0])
            .args(&argv[1..])
            .output()
            .map_err(|e| failed(format!("cannot spawn `{}`: {e}", argv[0])))?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            return Err(failed(format!("{}: {}", output.status, stderr.trim())));
        }
        let text = String::from_utf8_lossy(&output.stdout).into_owned();
        if text.trim().is_empty() {
            return Err(failed("converter produced no output".into()));
        }
        Ok(text)
    }
}

/// Reads a paper from disk. Markdown and text files are read verbatim (with
/// lossy UTF-8 decoding); PDFs go through `converter`.
pub fn load_paper(path: &Path, converter: Option<&Converter>) -> Result<PaperDocument, PaperError> {
    if !path.is_file() {
        return Err(PaperError::FileNotFound(path.to_path_buf()));
    }
    let is_pdf = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("pdf"))
        .unwrap_or(false);
    let text = if is_pdf {
        let converter =
            converter.ok_or_else(|| PaperError::PdfWithoutConverter(path.to_path_buf()))?;
        converter.convert(path)?
    } else {
        let bytes = std::fs::read(path).map_err(|source| PaperError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        String::from_utf8_lossy(&bytes).into_owned()
    };
    PaperDocument::from_markdown(path, &text)
}

/// Validated segmentation limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperChunking {
    max_chunk_chars: usize,
    overlap_chars: usize,
}

impl PaperChunking {
    pub fn new(max_chunk_chars: usize, overlap_chars: usize) -> Result<Self, PaperError> {
        if max_chunk_chars < MIN_CHUNK_CHARS {
            return Err(PaperError::InvalidChunking(format!(
                "max_chunk_chars must be at least {MIN_CHUNK_CHARS}, got {max_chunk_chars}"
            )));
        }
        if overlap_chars >= max_chunk_chars {
            return Err(PaperError::InvalidChunking(format!(
                "overlap_chars ({overlap_chars}) must be below max_chunk_chars ({max_chunk_chars})"
            )));
        }
        Ok(Self {
            max_chunk_chars,
            overlap_chars,
        })
    }

    pub fn max_chunk_chars(&self) -> usize {
        self.max_chunk_chars
    }

    pub fn overlap_chars(&self) -> usize {
        self.overlap_chars
    }
}

impl Default for PaperChunking {
    fn default() -> Self {
        Self {
            max_chunk_chars: DEFAULT_MAX_CHUNK_CHARS,
            overlap_chars: DEFAULT_OVERLAP_CHARS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperChunk {
    pub chunk_id: String,
    /// Heading titles from the outermost section down to the owning one.
    pub section_path: Vec<String>,
    /// 0 for the preamble before the first heading.
    pub heading_level: u8,
    pub body: String,
    pub char_start: usize,
    pub char_end: usize,
    /// Length in bytes of the prefix repeated from the previous chunk.
    pub overlap_len: usize,
    pub seq: usize,
}

impl PaperChunk {
    /// The part of the body that no earlier chunk already covers.
    pub fn fresh_text(&self) -> &str {
        &self.body[self.overlap_len..]
    }

    pub fn section_label(&self) -> String {
        if self.section_path.is_empty() {
            "(preamble)".to_string()
        } else {
            self.section_path.join(" > ")
        }
    }
}

/// Splits a paper into heading-delimited, size-bounded chunks.
pub fn segment_paper(doc: &PaperDocument, params: PaperChunking) -> Vec<PaperChunk> {
    let text = doc.raw_text.as_str();
    if text.is_empty() {
        return Vec::new();
    }
    let layout = scan_layout(text);
    let stem = doc.id_stem();

    let mut sections: Vec<(usize, usize, u8, Vec<String>)> = Vec::new();
    let first_heading = layout
        .headings
        .first()
        .map(|h| h.offset)
        .unwrap_or(text.len());
    if first_heading > 0 {
        sections.push((0, first_heading, 0, Vec::new()));
    }
    let mut stack: Vec<(u8, String)> = Vec::new();
    for (i, heading) in layout.headings.iter().enumerate() {
        while stack
            .last()
            .is_some_and(|(level, _)| *level >= heading.level)
        {
            stack.pop();
        }
        stack.push((heading.level, heading.title.clone()));
        let end = layout
            .headings
            .get(i + 1)
            .map(|h| h.offset)
            .unwrap_or(text.len());
        let path = stack.iter().map(|(_, t)| t.clone()).collect();
        sections.push((heading.offset, end, heading.level, path));
    }

    let mut chunks = Vec::new();
    for (start, end, level, path) in sections {
        let pieces = split_section(
            text,
            start,
            end,
            &layout.split_points,
            params.max_chunk_chars,
        );
        let mut prev_start = start;
        for (i, &(piece_start, piece_end)) in pieces.iter().enumerate() {
            let chunk_start = if i == 0 {
                piece_start
            } else {
                overlap_start(text, start, prev_start, piece_start, params.overlap_chars)
            };
            let seq = chunks.len();
            chunks.push(PaperChunk {
                chunk_id: format!("{stem}#{seq:04}"),
                section_path: path.clone(),
                heading_level: level,
                body: text[chunk_start..piece_end].to_string(),
                char_start: chunk_start,
                char_end: piece_end,
                overlap_len: piece_start - chunk_start,
                seq,
            });
            prev_start = chunk_start;
        }
    }
    chunks
}

/// Start of the overlap prefix for a continuation piece beginning at
/// `piece_start`. The prefix stays inside the predecessor and never reaches
/// back to the section's first character, so the heading line opens exactly
/// one chunk.
fn overlap_start(
    text: &str,
    section_start: usize,
    prev_start: usize,
    piece_start: usize,
    overlap: usize,
) -> usize {
    if overlap == 0 {
        return piece_start;
    }
    let back = text[..piece_start]
        .char_indices()
        .rev()
        .nth(overlap - 1)
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut start = back.max(prev_start);
    if start == section_start {
        start += text[start..]
            .chars()
            .next()
            .map(char::len_utf8)
            .unwrap_or(0);
    }
    start.min(piece_start)
}

fn split_section(
    text: &str,
    start: usize,
    end: usize,
    split_points: &[usize],
    max_chars: usize,
) -> Vec<(usize, usize)> {
    let mut pieces = Vec::new();
    let mut pos = start;
    while let Some((i, _)) = text[pos..end].char_indices().nth(max_chars) {
        let limit = pos + i;
        // Last split point in (pos, limit].
        let idx = split_points.partition_point(|&p| p <= limit);
        let cut = split_points[..idx]
            .last()
            .copied()
            .filter(|&p| p > pos)
            .unwrap_or(limit);
        pieces.push((pos, cut));
        pos = cut;
    }
    pieces.push((pos, end));
    pieces
}

#[derive(Debug)]
struct Heading {
    offset: usize,
    level: u8,
    title: String,
}

#[derive(Debug, Default)]
struct Layout {
    headings: Vec<Heading>,
    /// Byte offsets where an oversized section may be cut: line starts after
    /// a blank line, at a fence opening, or after a fence closing. Never
    /// inside a fence.
    split_points: Vec<usize>,
}

fn scan_layout(text: &str) -> Layout {
    let mut layout = Layout::default();
    let mut fence: Option<usize> = None;
    let mut prev_blank = false;
    let mut prev_closed_fence = false;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let content = line.trim_end_matches(['\n', '\r']);
        match fence {
            Some(open_len) => {
                if is_fence_close(content, open_len) {
                    fence = None;
                    prev_closed_fence = true;
                } else {
                    prev_closed_fence = false;
                }
                prev_blank = false;
            }
            None => {
                let opens = fence_open(content);
                if offset > 0 && (prev_blank || prev_closed_fence || opens.is_some()) {
                    layout.split_points.push(offset);
                }
                if let Some(len) = opens {
                    fence = Some(len);
                } else if let Some((level, title)) = atx_heading(content) {
                    layout.headings.push(Heading {
                        offset,
                        level,
                        title,
                    });
                }
                prev_blank = content.trim().is_empty();
                prev_closed_fence = false;
            }
        }
        offset += line.len();
    }
    layout
}

/// Length of the backtick run if `line` opens a fenced block.
fn fence_open(line: &str) -> Option<usize> {
    let indent = line.len() - line.trim_start_matches(' ').len();
    if indent > 3 {
        return None;
    }
    let rest = &line[indent..];
    let ticks = rest.len() - rest.trim_start_matches('`').len();
    (ticks >= 3).then_some(ticks)
}

fn is_fence_close(line: &str, open_len: usize) -> bool {
    let trimmed = line.trim();
    !trimmed.is_empty() && trimmed.chars().all(|c| c == '`') && trimmed.len() >= open_len
}

/// Parses an ATX heading line (1 to 6 `#` followed by whitespace or end of
/// line) into its level and title.
pub(crate) fn atx_heading(line: &str) -> Option<(u8, String)> {
    let hashes = line.len() - line.trim_start_matches('#').len();
    if hashes == 0 || hashes > 6 {
        return None;
    }
    let rest = &line[hashes..];
    if !(rest.is_empty() || rest.starts_with(' ') || rest.starts_with('\t')) {
        return None;
    }
    let mut title = rest.trim();
    // Optional closing sequence: "## Title ##".
    let without_close = title.trim_end_matches('#');
    if without_close.is_empty() || without_close.ends_with(' ') || without_close.ends_with('\t') {
        title = without_close.trim_end();
    }
    Some((hashes as u8, title.to_string()))
}

fn first_title(text: &str) -> Option<String> {
    let mut fence: Option<usize> = None;
    for line in text.lines() {
        match fence {
            Some(len) => {
                if is_fence_close(line, len) {
                    fence = None;
                }
            }
            None => {
                if let Some(len) = fence_open(line) {
                    fence = Some(len);
                } else if let Some((1, title)) = atx_heading(line) {
                    if !title.is_empty() {
                        return Some(title);
                    }
                }
            }
        }
    }
    None
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "paper".to_string())
}

/// Rewrites setext headings (a one-line paragraph underlined with `===` or
/// `---`) as ATX headings. Multi-line paragraphs, list items, quotes and
/// table rows are left alone, as is anything inside a fence.
fn normalize_setext(text: &str) -> String {
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let mut out = String::with_capacity(text.len() + 16);
    let mut fence: Option<usize> = None;
    let mut prev_blank = true;
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        let content = line.trim_end_matches(['\n', '\r']);
        if let Some(len) = fence {
            if is_fence_close(content, len) {
                fence = None;
            }
            out.push_str(line);
            prev_blank = false;
            i += 1;
            continue;
        }
        if let Some(len) = fence_open(content) {
            fence = Some(len);
            out.push_str(line);
            prev_blank = false;
            i += 1;
            continue;
        }
        if prev_blank && could_be_setext_text(content) {
            if let Some(level) = lines
                .get(i + 1)
                .and_then(|u| setext_underline(u.trim_end_matches(['\n', '\r'])))
            {
                let underline = lines[i + 1];
                let ending = &underline[underline.trim_end_matches(['\n', '\r']).len()..];
                out.push_str(&"#".repeat(level));
                out.push(' ');
                out.push_str(content.trim());
                out.push_str(ending);
                // The heading acts as a block boundary for what follows.
                prev_blank = true;
                i += 2;
                continue;
            }
        }
        out.push_str(line);
        prev_blank = content.trim().is_empty() || atx_heading(content).is_some();
        i += 1;
    }
    out
}

fn could_be_setext_text(line: &str) -> bool {
    let t = line.trim_start();
    let indent = line.len() - t.len();
    if t.is_empty() || indent > 3 || atx_heading(t).is_some() {
        return false;
    }
    let list_like = t.starts_with("- ")
        || t.starts_with("* ")
        || t.starts_with("+ ")
        || t.starts_with('>')
        || t.starts_with('|')
        || t.split_once(". ")
            .is_some_and(|(n, _)| !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()));
    !list_like && setext_underline(line).is_none()
}

fn setext_underline(line: &str) -> Option<usize> {
    let t = line.trim();
    let indent = line.len() - line.trim_start().len();
    if indent > 3 || t.len() < 2 {
        return None;
    }
    if t.chars().all(|c| c == '=') {
        Some(1)
    } else if t.chars().all(|c| c == '-') {
        Some(2)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> PaperDocument {
        PaperDocument::from_markdown("paper.md", text).unwrap()
    }

    fn params(max: usize, overlap: usize) -> PaperChunking {
        PaperChunking::new(max, overlap).unwrap()
    }

    fn assert_covers(d: &PaperDocument, chunks: &[PaperChunk]) {
        let rebuilt: String = chunks.iter().map(PaperChunk::fresh_text).collect();
        assert_eq!(rebuilt, d.raw_text);
        for c in chunks {
            assert_eq!(c.body, d.raw_text[c.char_start..c.char_end]);
        }
    }

    #[test]
    fn title_and_length_from_markdown() {
        let d = doc("# T\nbody");
        assert_eq!(d.title, "T");
        assert_eq!(d.byte_length, 8);
    }

    #[test]
    fn title_falls_back_to_stem() {
        let d = PaperDocument::from_markdown("dir/my-paper.md", "no headings here").unwrap();
        assert_eq!(d.title, "my-paper");
    }

    #[test]
    fn whitespace_only_is_empty() {
        let err = PaperDocument::from_markdown("p.md", " \n\t\n").unwrap_err();
        assert!(matches!(err, PaperError::EmptyDocument(_)));
    }

    #[test]
    fn load_reads_file_and_rejects_pdf_without_converter() {
        let dir = tempfile::tempdir().unwrap();
        let md = dir.path().join("paper.md");
        std::fs::write(&md, "# T\nbody").unwrap();
        let d = load_paper(&md, None).unwrap();
        assert_eq!(d.title, "T");
        assert_eq!(d.byte_length, 8);

        let pdf = dir.path().join("paper.pdf");
        std::fs::write(&pdf, b"%PDF-1.4").unwrap();
        assert!(matches!(
            load_paper(&pdf, None),
            Err(PaperError::PdfWithoutConverter(_))
        ));

        let missing = dir.path().join("nope.md");
        assert!(matches!(
            load_paper(&missing, None),
            Err(PaperError::FileNotFound(_))
        ));

        let blank = dir.path().join("blank.md");
        std::fs::write(&blank, "   \n\n").unwrap();
        assert!(matches!(
            load_paper(&blank, None),
            Err(PaperError::EmptyDocument(_))
        ));
    }

    #[test]
    fn invalid_utf8_is_replaced() {
        let dir = tempfile::tempdir().unwrap();
        let md = dir.path().join("paper.md");
        std::fs::write(&md, b"# T\nbad \xff byte").unwrap();
        let d = load_paper(&md, None).unwrap();
        assert!(d.raw_text.contains('\u{FFFD}'));
    }

    #[cfg(unix)]
    #[test]
    fn pdf_goes_through_converter() {
        let dir = tempfile::tempdir().unwrap();
        let pdf = dir.path().join("paper.pdf");
        std::fs::write(&pdf, "# Converted\ntext").unwrap();
        let d = load_paper(&pdf, Some(&Converter::new("cat {}"))).unwrap();
        assert_eq!(d.title, "Converted");

        let failing = Converter::new("false");
        assert!(matches!(
            load_paper(&pdf, Some(&failing)),
            Err(PaperError::ConverterFailed { .. })
        ));

        let silent = Converter::new("true {}");
        assert!(matches!(
            load_paper(&pdf, Some(&silent)),
            Err(PaperError::ConverterFailed { .. })
        ));
    }

    #[test]
    fn converter_appends_path_without_placeholder() {
        let argv = Converter::new("tool --md")
            .argv(Path::new("a b.pdf"))
            .unwrap();
        assert_eq!(argv, vec!["tool", "--md", "a b.pdf"]);
        let argv = Converter::new("tool -i {} -o -")
            .argv(Path::new("x.pdf"))
            .unwrap();
        assert_eq!(argv, vec!["tool", "-i", "x.pdf", "-o", "-"]);
    }

    #[test]
    fn two_headings_two_chunks() {
        let d = doc("# A\nx\n## B\ny");
        let chunks = segment_paper(&d, params(4000, 200));
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].section_path, vec!["A"]);
        assert_eq!(chunks[1].section_path, vec!["A", "B"]);
        assert_eq!(chunks[0].body, "# A\nx\n");
        assert_eq!(chunks[1].body, "## B\ny");
        assert_eq!(chunks[1].heading_level, 2);
        assert_covers(&d, &chunks);
    }

    #[test]
    fn no_headings_single_preamble() {
        let d = doc("just some text\n\nmore text\n");
        let chunks = segment_paper(&d, PaperChunking::default());
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].heading_level, 0);
        assert_eq!(chunks[0].body, d.raw_text);
        assert!(chunks[0].section_path.is_empty());
    }

    #[test]
    fn preamble_before_first_heading() {
        let d = doc("intro\n# A\nbody\n");
        let chunks = segment_paper(&d, PaperChunking::default());
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].body, "intro\n");
        assert_eq!(chunks[0].heading_level, 0);
        assert_eq!(chunks[1].section_path, vec!["A"]);
    }

    #[test]
    fn sibling_headings_pop_the_stack() {
        let d = doc("# A\n## B\n### C\n## D\n# E\n");
        let paths: Vec<_> = segment_paper(&d, PaperChunking::default())
            .into_iter()
            .map(|c| c.section_path)
            .collect();
        assert_eq!(
            paths,
            vec![
                vec!["A".to_string()],
                vec!["A".into(), "B".into()],
                vec!["A".into(), "B".into(), "C".into()],
                vec!["A".into(), "D".into()],
                vec!["E".into()],
            ]
        );
    }

    #[test]
    fn hashes_inside_fences_are_not_headings() {
        let d = doc("# A\n```python\n# comment\nx = 1\n```\n# B\n");
        let chunks = segment_paper(&d, PaperChunking::default());
        assert_eq!(chunks.len(), 2);
        assert!(chunks[0].body.contains("# comment"));
    }

    #[test]
    fn heading_requires_space_after_hashes() {
        assert_eq!(atx_heading("#hashtag"), None);
        assert_eq!(atx_heading("####### seven"), None);
        assert_eq!(atx_heading("## Title ##"), Some((2, "Title".into())));
        assert_eq!(atx_heading("#"), Some((1, String::new())));
        assert_eq!(atx_heading("# C#"), Some((1, "C#".into())));
    }

    #[test]
    fn setext_headings_become_atx() {
        let d = doc("Title\n=====\n\ntext\n\nSub\n---\nmore\n");
        assert_eq!(d.raw_text, "# Title\n\ntext\n\n## Sub\nmore\n");
        assert_eq!(d.title, "Title");
    }

    #[test]
    fn thematic_break_and_lists_are_not_setext() {
        let text = "para line one\nline two\n---\n\n- item\n---\n";
        let d = doc(text);
        assert_eq!(d.raw_text, text);
    }

    #[test]
    fn long_section_splits_at_paragraphs() {
        let para = "word ".repeat(59) + "word\n\n"; // 300 chars
        let body: String = std::iter::repeat_n(para.as_str(), 30).collect();
        let text = format!("# Long\n{body}");
        let d = doc(&text);
        let chunks = segment_paper(&d, params(4000, 200));
        assert!(chunks.len() >= 3, "got {}", chunks.len());
        for c in &chunks {
            assert!(c.body.chars().count() <= 4200);
            assert_eq!(c.section_path, vec!["Long"]);
        }
        for c in &chunks[1..] {
            assert_eq!(c.overlap_len, 200);
            // each fresh piece starts at a paragraph boundary
            assert!(c.fresh_text().starts_with("word"));
        }
        assert_covers(&d, &chunks);
    }

    #[test]
    fn oversized_paragraph_is_hard_split() {
        let text = format!("# H\n{}", "x".repeat(1000));
        let d = doc(&text);
        let chunks = segment_paper(&d, params(300, 50));
        assert_eq!(chunks.len(), 4);
        assert_eq!(chunks[0].body.chars().count(), 300);
        for c in &chunks {
            assert!(c.body.chars().count() <= 350);
        }
        assert_covers(&d, &chunks);
    }

    #[test]
    fn fences_are_not_split_when_they_fit() {
        let fence = format!("```\n{}```\n", "code line\n".repeat(20)); // 208 chars
        let text = format!("# H\n{}\n{}{}", "a".repeat(150), fence, "b".repeat(100));
        let d = doc(&text);
        let chunks = segment_paper(&d, params(300, 0));
        assert_covers(&d, &chunks);
        let holding: Vec<_> = chunks
            .iter()
            .filter(|c| c.body.contains("code line"))
            .collect();
        assert_eq!(holding.len(), 1);
        assert!(holding[0].body.starts_with("```"));
        assert!(holding[0].body.contains(&fence));
    }

    #[test]
    fn short_first_piece_keeps_heading_unique() {
        let text = format!("# H\nshort\n\n{}", "y".repeat(900));
        let d = doc(&text);
        let chunks = segment_paper(&d, params(400, 200));
        let starting_at_heading = chunks.iter().filter(|c| c.char_start == 0).count();
        assert_eq!(starting_at_heading, 1);
        assert_covers(&d, &chunks);
    }

    #[test]
    fn multibyte_text_splits_on_char_boundaries() {
        let text = format!("# Ü\n{}", "é".repeat(700));
        let d = doc(&text);
        let chunks = segment_paper(&d, params(250, 30));
        for c in &chunks {
            assert!(c.body.chars().count() <= 280);
        }
        assert_covers(&d, &chunks);
    }

    #[test]
    fn chunk_ids_are_stable_and_unique() {
        let d = doc("# A\nx\n# B\ny\n# C\nz\n");
        let a = segment_paper(&d, PaperChunking::default());
        let b = segment_paper(&d, PaperChunking::default());
        assert_eq!(a, b);
        assert_eq!(a[0].chunk_id, "paper#0000");
        assert_eq!(a[2].chunk_id, "paper#0002");
    }

    #[test]
    fn chunking_params_are_validated() {
        assert!(PaperChunking::new(199, 0).is_err());
        assert!(PaperChunking::new(200, 200).is_err());
        assert!(PaperChunking::new(200, 199).is_ok());
    }
}
