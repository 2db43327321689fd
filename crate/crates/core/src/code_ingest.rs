//! Codebase unpacking and structure-aware code chunking.
//!
//! The archive is read in memory; nothing is extracted to disk. Entry names
//! are checked before anything else so that a hostile archive is rejected as
//! a whole rather than partially ingested.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use globset::{Glob, GlobSet, GlobSetBuilder};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MAX_FILE_BYTES: u64 = 1024 * 1024;
pub const DEFAULT_MAX_CHUNK_LINES: usize = 120;
pub const DEFAULT_OVERLAP_LINES: usize = 20;
pub const MIN_CHUNK_LINES: usize = 20;

pub const DEFAULT_INCLUDE_EXTS: &[&str] = &[
    "py", "js", "ts", "java", "c", "cc", "cpp", "h", "hpp", "go", "rs", "sh", "md", "txt", "json",
    "yaml", "yml", "toml", "ini", "cfg", "ipynb",
];

pub const DEFAULT_IGNORE_GLOBS: &[&str] = &[
    ".git/**",
    "**/node_modules/**",
    "**/__pycache__/**",
    "**/*.min.js",
];

const BINARY_SNIFF_BYTES: usize = 8 * 1024;

#[derive(Debug, Error)]
pub enum CodeError {
    #[error("cannot read archive {path}: {reason}")]
    ArchiveUnreadable { path: PathBuf, reason: String },
    #[error("archive entry `{entry}` escapes the extraction root; refusing hostile archive")]
    ZipSlipDetected { entry: String },
    #[error("archive {0} contains no eligible source files")]
    EmptyCodebase(PathBuf),
    #[error("invalid ignore glob `{pattern}`: {reason}")]
    InvalidGlob { pattern: String, reason: String },
    #[error("invalid code chunking parameters: {0}")]
    InvalidChunking(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanguageTag {
    Python,
    BraceLanguage,
    Config,
    Text,
    Unknown,
}

impl LanguageTag {
    pub fn from_extension(ext: &str) -> Self {
        match ext.to_ascii_lowercase().as_str() {
            "py" => Self::Python,
            "js" | "ts" | "java" | "c" | "cc" | "cpp" | "h" | "hpp" | "go" | "rs" | "sh" => {
                Self::BraceLanguage
            }
            "json" | "yaml" | "yml" | "toml" | "ini" | "cfg" | "ipynb" => Self::Config,
            "md" | "txt" => Self::Text,
            _ => Self::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Python => "python",
            Self::BraceLanguage => "brace_language",
            Self::Config => "config",
            Self::Text => "text",
            Self::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeFile {
    pub rel_path: String,
    pub language_tag: LanguageTag,
    pub content: String,
    pub line_count: usize,
}

impl CodeFile {
    pub fn new(rel_path: impl Into<String>, content: impl Into<String>) -> Self {
        let rel_path = rel_path.into();
        let content = content.into();
        let ext = Path::new(&rel_path)
            .extension()
            .map(|e| e.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self {
            language_tag: LanguageTag::from_extension(&ext),
            line_count: split_lines(&content).len(),
            rel_path,
            content,
        }
    }
}

#[derive(Debug, Clone)]
pub struct UnpackOptions {
    pub include_exts: BTreeSet<String>,
    pub ignore_globs: Vec<String>,
    pub max_file_bytes: u64,
}

impl Default for UnpackOptions {
    fn default() -> Self {
        Self {
            include_exts: DEFAULT_INCLUDE_EXTS.iter().map(|s| s.to_string()).collect(),
            ignore_globs: DEFAULT_IGNORE_GLOBS.iter().map(|s| s.to_string()).collect(),
            max_file_bytes: DEFAULT_MAX_FILE_BYTES,
        }
    }
}

impl UnpackOptions {
    fn glob_set(&self) -> Result<GlobSet, CodeError> {
        let mut builder = GlobSetBuilder::new();
        for pattern in &self.ignore_globs {
            let glob = Glob::new(pattern).map_err(|e| CodeError::InvalidGlob {
                pattern: pattern.clone(),
                reason: e.to_string(),
            })?;
            builder.add(glob);
        }
        builder.build().map_err(|e| CodeError::InvalidGlob {
            pattern: self.ignore_globs.join(","),
            reason: e.to_string(),
        })
    }
}

/// Normalizes an archive entry name to a forward-slash relative path.
/// Returns `None` for absolute paths, drive prefixes and any `..` segment.
pub fn normalize_entry_name(name: &str) -> Option<String> {
    let name = name.replace('\\', "/");
    if name.starts_with('/') {
        return None;
    }
    let bytes = name.as_bytes();
    if bytes.len() >= 2 && bytes[1] == b':' && bytes[0].is_ascii_alphabetic() {
        return None;
    }
    let mut parts = Vec::new();
    for segment in name.split('/') {
        match segment {
            "" | "." => {}
            ".." => return None,
            s => parts.push(s),
        }
    }
    Some(parts.join("/"))
}

/// Reads every eligible source file out of a ZIP archive, sorted by path.
pub fn unpack_codebase(
    zip_path: &Path,
    options: &UnpackOptions,
) -> Result<Vec<CodeFile>, CodeError> {
    let unreadable = |reason: String| CodeError::ArchiveUnreadable {
        path: zip_path.to_path_buf(),
        reason,
    };
    let file = std::fs::File::open(zip_path).map_err(|e| unreadable(e.to_string()))?;
    let mut archive = zip::ZipArchive::new(file).map_err(|e| unreadable(e.to_string()))?;
    let ignore = options.glob_set()?;

    // Reject the whole archive on any traversal entry, before reading data.
    let mut names = Vec::with_capacity(archive.len());
    for i in 0..archive.len() {
        let entry = archive
            .by_index_raw(i)
            .map_err(|e| unreadable(e.to_string()))?;
        let raw = entry.name().to_string();
        let rel =
            normalize_entry_name(&raw).ok_or(CodeError::ZipSlipDetected { entry: raw.clone() })?;
        names.push((i, rel, entry.is_dir(), entry.size()));
    }

    let mut files = Vec::new();
    for (index, rel_path, is_dir, size) in names {
        if is_dir || rel_path.is_empty() {
            continue;
        }
        let ext = Path::new(&rel_path)
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .unwrap_or_default();
        if !options.include_exts.contains(&ext)
            || ignore.is_match(&rel_path)
            || size > options.max_file_bytes
        {
            continue;
        }
        let mut entry = archive
            .by_index(index)
            .map_err(|e| unreadable(e.to_string()))?;
        let mut bytes = Vec::with_capacity(size as usize);
        entry
            .by_ref()
            .take(options.max_file_bytes + 1)
            .read_to_end(&mut bytes)
            .map_err(|e| unreadable(format!("{rel_path}: {e}")))?;
        if bytes.len() as u64 > options.max_file_bytes {
            continue;
        }
        if bytes[..bytes.len().min(BINARY_SNIFF_BYTES)].contains(&0) {
            continue;
        }
        files.push(CodeFile::new(
            rel_path,
            String::from_utf8_lossy(&bytes).into_owned(),
        ));
    }
    if files.is_empty() {
        return Err(CodeError::EmptyCodebase(zip_path.to_path_buf()));
    }
    files.sort_by(|a, b| a.rel_path.cmp(&b.rel_path));
    files.dedup_by(|a, b| a.rel_path == b.rel_path);
    Ok(files)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeChunking {
    max_chunk_lines: usize,
    overlap_lines: usize,
}

impl CodeChunking {
    pub fn new(max_chunk_lines: usize, overlap_lines: usize) -> Result<Self, CodeError> {
        if max_chunk_lines < MIN_CHUNK_LINES {
            return Err(CodeError::InvalidChunking(format!(
                "max_chunk_lines must be at least {MIN_CHUNK_LINES}, got {max_chunk_lines}"
            )));
        }
        if overlap_lines >= max_chunk_lines {
            return Err(CodeError::InvalidChunking(format!(
                "overlap_lines ({overlap_lines}) must be below max_chunk_lines ({max_chunk_lines})"
            )));
        }
        Ok(Self {
            max_chunk_lines,
            overlap_lines,
        })
    }

    pub fn max_chunk_lines(&self) -> usize {
        self.max_chunk_lines
    }

    pub fn overlap_lines(&self) -> usize {
        self.overlap_lines
    }
}

impl Default for CodeChunking {
    fn default() -> Self {
        Self {
            max_chunk_lines: DEFAULT_MAX_CHUNK_LINES,
            overlap_lines: DEFAULT_OVERLAP_LINES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Function,
    Class,
    ConfigWhole,
    LineWindow,
    FileWhole,
}

impl UnitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Function => "function",
            Self::Class => "class",
            Self::ConfigWhole => "config_whole",
            Self::LineWindow => "line_window",
            Self::FileWhole => "file_whole",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeChunk {
    pub chunk_id: String,
    pub rel_path: String,
    pub unit_kind: UnitKind,
    pub unit_name: Option<String>,
    /// 1-based, inclusive.
    pub line_start: usize,
    pub line_end: usize,
    pub body: String,
    pub seq: usize,
}

impl CodeChunk {
    /// Text handed to the embedder: the body behind a one-line file banner.
    pub fn embedding_text(&self) -> String {
        format!("// file: {}\n{}", self.rel_path, self.body)
    }

    pub fn location(&self) -> String {
        format!("{}:{}-{}", self.rel_path, self.line_start, self.line_end)
    }
}

/// Lines of `content` without terminators; a trailing newline does not
/// start an extra line.
fn split_lines(content: &str) -> Vec<&str> {
    if content.is_empty() {
        return Vec::new();
    }
    let trimmed = content.strip_suffix('\n').unwrap_or(content);
    trimmed.split('\n').collect()
}

/// A detected structural unit: 0-based first line and optional name.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Boundary {
    line: usize,
    kind: UnitKind,
    name: Option<String>,
}

static PY_UNIT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^ {0,8}(?:async\s+)?(def|class)\s+([A-Za-z_][A-Za-z0-9_]*)?").unwrap()
});
static CALL_LIKE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([A-Za-z_][A-Za-z0-9_]*)\s*\(").unwrap());
static TYPE_LIKE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(class|struct|interface|trait|impl|enum|union|namespace)\b\s*(?:<[^>]*>\s*)?([A-Za-z_][A-Za-z0-9_]*)?")
        .unwrap()
});

const CONTROL_WORDS: &[&str] = &[
    "if", "for", "while", "switch", "catch", "return", "else", "do", "match", "loop", "sizeof",
    "elif", "with", "function",
];

fn python_boundaries(lines: &[&str]) -> Vec<Boundary> {
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if let Some(caps) = PY_UNIT.captures(line) {
            let kind = if &caps[1] == "class" {
                UnitKind::Class
            } else {
                UnitKind::Function
            };
            let start = attach_leading(lines, i, out.last().map(|b: &Boundary| b.line), |t| {
                t.starts_with('@') || t.starts_with('#')
            });
            out.push(Boundary {
                line: start,
                kind,
                name: caps.get(2).map(|m| m.as_str().to_string()),
            });
        }
    }
    out
}

fn brace_boundaries(lines: &[&str]) -> Vec<Boundary> {
    let mut out: Vec<Boundary> = Vec::new();
    let mut suppressed_until: Option<usize> = None;
    for (i, line) in lines.iter().enumerate() {
        if suppressed_until.is_some_and(|s| i <= s) {
            continue;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('}') || is_comment(trimmed) {
            continue;
        }
        let indent = line.len() - line.trim_start().len();
        let top_level_opener = indent == 0 && trimmed.ends_with('{');
        let brace_line = signature_brace(lines, i, indent);
        if !top_level_opener && brace_line.is_none() {
            continue;
        }
        if let Some(j) = brace_line {
            suppressed_until = Some(j);
        }
        let (kind, name) = describe_brace_unit(trimmed);
        let start = attach_leading(
            lines,
            i,
            out.last().map(|b| b.line),
            is_comment_or_attribute,
        );
        out.push(Boundary {
            line: start,
            kind,
            name,
        });
    }
    out
}

/// For a signature-like line (`name(...)` that is not a control statement),
/// the index of the line within the next two that ends with `{`.
fn signature_brace(lines: &[&str], i: usize, indent: usize) -> Option<usize> {
    if indent > 4 {
        return None;
    }
    let trimmed = lines[i].trim();
    if trimmed.ends_with(';') || trimmed.starts_with('.') {
        return None;
    }
    let name = CALL_LIKE.captures(trimmed)?.get(1)?.as_str();
    if CONTROL_WORDS.contains(&name)
        || trimmed
            .split_whitespace()
            .next()
            .is_some_and(|w| CONTROL_WORDS.contains(&w))
    {
        return None;
    }
    (i..=(i + 2).min(lines.len() - 1)).find(|&j| {
        let t = lines[j].trim_end();
        t.ends_with('{') && (j == i || !t.trim_end().ends_with(';'))
    })
}

fn describe_brace_unit(trimmed: &str) -> (UnitKind, Option<String>) {
    if let Some(caps) = TYPE_LIKE.captures(trimmed) {
        if !trimmed.contains('(') || caps.get(0).map(|m| m.start()) < trimmed.find('(') {
            return (UnitKind::Class, caps.get(2).map(|m| m.as_str().to_string()));
        }
    }
    let name = CALL_LIKE
        .captures_iter(trimmed)
        .filter_map(|c| c.get(1))
        .map(|m| m.as_str())
        .find(|n| !CONTROL_WORDS.contains(n))
        .map(str::to_string);
    (UnitKind::Function, name)
}

fn is_comment(trimmed: &str) -> bool {
    trimmed.starts_with("//")
        || trimmed.starts_with("/*")
        || trimmed.starts_with('*')
        || trimmed.starts_with('#')
}

fn is_comment_or_attribute(trimmed: &str) -> bool {
    is_comment(trimmed) || trimmed.starts_with('@')
}

/// Moves a unit start upwards over directly attached lines (decorators, doc
/// comments, attributes) without crossing the previous unit's first line.
fn attach_leading(
    lines: &[&str],
    line: usize,
    previous: Option<usize>,
    attached: impl Fn(&str) -> bool,
) -> usize {
    let floor = previous.map(|p| p + 1).unwrap_or(0);
    let mut start = line;
    while start > floor {
        let above = lines[start - 1].trim();
        if above.is_empty() || !attached(above) {
            break;
        }
        start -= 1;
    }
    start
}

fn windows(first: usize, last: usize, params: CodeChunking) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = first;
    loop {
        let end = (start + params.max_chunk_lines - 1).min(last);
        out.push((start, end));
        if end == last {
            break;
        }
        start = end + 1 - params.overlap_lines;
    }
    out
}

/// Splits a file into chunks at detected function/class boundaries, falling
/// back to whole-file or overlapping line windows.
pub fn segment_code(file: &CodeFile, params: CodeChunking) -> Vec<CodeChunk> {
    let lines = split_lines(&file.content);
    let n = lines.len();
    if n == 0 {
        return Vec::new();
    }
    let max = params.max_chunk_lines;

    // (1-based start, 1-based end, kind, name) before window re-splitting.
    let mut units: Vec<(usize, usize, UnitKind, Option<String>)> = Vec::new();
    let boundaries = match file.language_tag {
        LanguageTag::Python => python_boundaries(&lines),
        LanguageTag::BraceLanguage => brace_boundaries(&lines),
        _ => Vec::new(),
    };
    if file.language_tag == LanguageTag::Config {
        units.push((1, n, UnitKind::ConfigWhole, None));
    } else if boundaries.is_empty() {
        units.push((1, n, UnitKind::FileWhole, None));
    } else {
        if boundaries[0].line > 0 {
            units.push((1, boundaries[0].line, UnitKind::LineWindow, None));
        }
        for (i, b) in boundaries.iter().enumerate() {
            let end = boundaries.get(i + 1).map(|next| next.line).unwrap_or(n);
            units.push((b.line + 1, end, b.kind, b.name.clone()));
        }
    }

    let mut chunks = Vec::new();
    let mut push = |start: usize, end: usize, kind: UnitKind, name: Option<String>| {
        let seq = chunks.len();
        chunks.push(CodeChunk {
            chunk_id: format!("{}#{seq:03}", file.rel_path),
            rel_path: file.rel_path.clone(),
            unit_kind: kind,
            unit_name: name,
            line_start: start,
            line_end: end,
            body: lines[start - 1..end].join("\n"),
            seq,
        });
    };
    for (start, end, kind, name) in units {
        if end - start < max {
            push(start, end, kind, name);
        } else {
            for (ws, we) in windows(start, end, params) {
                push(ws, we, UnitKind::LineWindow, name.clone());
            }
        }
    }
    chunks
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn zip_with(entries: &[(&str, &[u8])]) -> tempfile::NamedTempFile {
        let file = tempfile::NamedTempFile::new().unwrap();
        let mut zip = zip::ZipWriter::new(file.reopen().unwrap());
        let opts = zip::write::SimpleFileOptions::default();
        for (name, data) in entries {
            zip.start_file(*name, opts).unwrap();
            zip.write_all(data).unwrap();
        }
        zip.finish().unwrap();
        file
    }

    fn ranges(chunks: &[CodeChunk]) -> Vec<(usize, usize)> {
        chunks.iter().map(|c| (c.line_start, c.line_end)).collect()
    }

    #[test]
    fn default_filters_pick_text_files() {
        let zip = zip_with(&[
            ("src/a.py", b"def f():\n    return 1\n"),
            ("README.md", b"# readme\n"),
            ("img.png", b"\x89PNG\r\n\x1a\n\0\0\0"),
        ]);
        let files = unpack_codebase(zip.path(), &UnpackOptions::default()).unwrap();
        let names: Vec<_> = files.iter().map(|f| f.rel_path.as_str()).collect();
        assert_eq!(names, ["README.md", "src/a.py"]);
        assert_eq!(files[1].language_tag, LanguageTag::Python);
        assert_eq!(files[0].language_tag, LanguageTag::Text);
    }

    #[test]
    fn traversal_entry_aborts() {
        let zip = zip_with(&[("ok.py", b"x = 1\n"), ("../evil.sh", b"rm -rf /\n")]);
        let err = unpack_codebase(zip.path(), &UnpackOptions::default()).unwrap_err();
        assert!(matches!(err, CodeError::ZipSlipDetected { ref entry } if entry == "../evil.sh"));
    }

    #[test]
    fn empty_archive_is_empty_codebase() {
        let zip = zip_with(&[]);
        let err = unpack_codebase(zip.path(), &UnpackOptions::default()).unwrap_err();
        assert!(matches!(err, CodeError::EmptyCodebase(_)));
    }

    #[test]
    fn not_a_zip_is_unreadable() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"definitely not a zip").unwrap();
        let err = unpack_codebase(f.path(), &UnpackOptions::default()).unwrap_err();
        assert!(matches!(err, CodeError::ArchiveUnreadable { .. }));
    }

    #[test]
    fn ignore_globs_size_and_binary_filters() {
        let big = vec![b'a'; 2048];
        let zip = zip_with(&[
            ("node_modules/x/index.js", b"function f() {\n}\n"),
            ("web/app.min.js", b"var a=1;"),
            (".git/config", b"[core]\n"),
            ("pkg/__pycache__/m.py", b"x=1\n"),
            ("src/big.txt", &big),
            ("src/nul.c", b"int x;\0\n"),
            ("src/keep.c", b"int main() {\n  return 0;\n}\n"),
        ]);
        let options = UnpackOptions {
            max_file_bytes: 1024,
            ..UnpackOptions::default()
        };
        let files = unpack_codebase(zip.path(), &options).unwrap();
        let names: Vec<_> = files.iter().map(|f| f.rel_path.as_str()).collect();
        assert_eq!(names, ["src/keep.c"]);
    }

    #[test]
    fn entry_name_normalization() {
        assert_eq!(normalize_entry_name("./a//b.py").as_deref(), Some("a/b.py"));
        assert_eq!(normalize_entry_name("a\\b.py").as_deref(), Some("a/b.py"));
        assert_eq!(normalize_entry_name("/etc/passwd"), None);
        assert_eq!(normalize_entry_name("C:/x.py"), None);
        assert_eq!(normalize_entry_name("a/../../b"), None);
        assert_eq!(normalize_entry_name("..\\x"), None);
    }

    #[test]
    fn python_two_functions_cover_file() {
        let src = "def a():\n    x = 1\n    y = 2\n    return x + y\n\ndef b():\n    z = 3\n    w = 4\n    return z\n# end\n";
        let file = CodeFile::new("m.py", src);
        assert_eq!(file.line_count, 10);
        let chunks = segment_code(&file, CodeChunking::default());
        assert_eq!(ranges(&chunks), [(1, 5), (6, 10)]);
        assert!(chunks.iter().all(|c| c.unit_kind == UnitKind::Function));
        assert_eq!(chunks[0].unit_name.as_deref(), Some("a"));
        assert_eq!(chunks[1].unit_name.as_deref(), Some("b"));
    }

    #[test]
    fn python_preamble_classes_and_decorators() {
        let src = "import os\n\nclass M:\n    @staticmethod\n    def f():\n        pass\n";
        let chunks = segment_code(&CodeFile::new("m.py", src), CodeChunking::default());
        assert_eq!(ranges(&chunks), [(1, 2), (3, 3), (4, 6)]);
        assert_eq!(chunks[0].unit_kind, UnitKind::LineWindow);
        assert_eq!(chunks[1].unit_kind, UnitKind::Class);
        assert_eq!(chunks[1].unit_name.as_deref(), Some("M"));
        assert_eq!(chunks[2].unit_kind, UnitKind::Function);
        assert!(chunks[2].body.starts_with("    @staticmethod"));
    }

    #[test]
    fn python_leading_comments_stay_with_their_unit() {
        let src = "def a():\n    pass\n# about b\n# more\ndef b():\n    pass\n";
        let chunks = segment_code(&CodeFile::new("m.py", src), CodeChunking::default());
        assert_eq!(ranges(&chunks), [(1, 2), (3, 6)]);
        assert!(chunks[1].body.starts_with("# about b"));
    }

    #[test]
    fn config_under_bound_is_whole() {
        let src: String = (1..=30).map(|i| format!("key{i}: {i}\n")).collect();
        let chunks = segment_code(&CodeFile::new("config.yaml", src), CodeChunking::default());
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].unit_kind, UnitKind::ConfigWhole);
        assert_eq!(ranges(&chunks), [(1, 30)]);
    }

    #[test]
    fn unstructured_file_windows() {
        let src: String = (1..=500).map(|i| format!("line {i}\n")).collect();
        let chunks = segment_code(
            &CodeFile::new("notes.txt", src),
            CodeChunking::new(120, 20).unwrap(),
        );
        assert_eq!(
            ranges(&chunks),
            [(1, 120), (101, 220), (201, 320), (301, 420), (401, 500)]
        );
        assert!(chunks.iter().all(|c| c.unit_kind == UnitKind::LineWindow));
        assert!(chunks[4].body.ends_with("line 500"));
    }

    #[test]
    fn small_unstructured_file_is_whole() {
        let chunks = segment_code(&CodeFile::new("a.txt", "one\ntwo"), CodeChunking::default());
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].unit_kind, UnitKind::FileWhole);
        assert_eq!(chunks[0].body, "one\ntwo");
    }

    #[test]
    fn brace_language_units() {
        let src = "#include <stdio.h>\n\n/// doc\nint add(int a, int b)\n{\n    return a + b;\n}\n\nstruct Point {\n    int x;\n};\n\nint main() {\n    if (add(1, 2)) {\n        return 0;\n    }\n}\n";
        let chunks = segment_code(&CodeFile::new("a.c", src), CodeChunking::default());
        assert_eq!(ranges(&chunks), [(1, 2), (3, 8), (9, 12), (13, 17)]);
        assert_eq!(chunks[1].unit_name.as_deref(), Some("add"));
        assert_eq!(chunks[2].unit_kind, UnitKind::Class);
        assert_eq!(chunks[2].unit_name.as_deref(), Some("Point"));
        assert_eq!(chunks[3].unit_name.as_deref(), Some("main"));
    }

    #[test]
    fn rust_impl_and_methods() {
        let src = "impl Foo {\n    pub fn new() -> Self {\n        Self\n    }\n}\n";
        let chunks = segment_code(&CodeFile::new("a.rs", src), CodeChunking::default());
        assert_eq!(chunks[0].unit_kind, UnitKind::Class);
        assert_eq!(chunks[1].unit_name.as_deref(), Some("new"));
        assert_eq!(ranges(&chunks), [(1, 1), (2, 5)]);
    }

    #[test]
    fn oversized_unit_resplit_keeps_name() {
        let mut src = String::from("def big():\n");
        for i in 0..60 {
            src.push_str(&format!("    x{i} = {i}\n"));
        }
        let chunks = segment_code(
            &CodeFile::new("b.py", src),
            CodeChunking::new(25, 5).unwrap(),
        );
        assert_eq!(ranges(&chunks), [(1, 25), (21, 45), (41, 61)]);
        assert!(chunks.iter().all(|c| c.unit_kind == UnitKind::LineWindow));
        assert!(chunks.iter().all(|c| c.unit_name.as_deref() == Some("big")));
    }

    #[test]
    fn banner_prefixes_embedding_text_only() {
        let chunks = segment_code(
            &CodeFile::new("src/a.py", "x = 1\n"),
            CodeChunking::default(),
        );
        assert_eq!(chunks[0].body, "x = 1");
        assert_eq!(chunks[0].embedding_text(), "// file: src/a.py\nx = 1");
        assert_eq!(chunks[0].chunk_id, "src/a.py#000");
    }

    #[test]
    fn empty_file_has_no_chunks() {
        assert!(segment_code(&CodeFile::new("e.py", ""), CodeChunking::default()).is_empty());
    }

    #[test]
    fn chunking_params_are_validated() {
        assert!(CodeChunking::new(19, 0).is_err());
        assert!(CodeChunking::new(20, 20).is_err());
        assert!(CodeChunking::new(20, 19).is_ok());
    }
}
