//! Store metadata for paper and code chunks, and the provenance labels
//! derived from it.

use std::collections::BTreeMap;

use crate::code_ingest::CodeChunk;
use crate::embed_store::{Source, StoreInput};
use crate::paper_ingest::PaperChunk;

pub const SECTION_PATH: &str = "section_path";
pub const HEADING_LEVEL: &str = "heading_level";
pub const CHAR_START: &str = "char_start";
pub const CHAR_END: &str = "char_end";
pub const REL_PATH: &str = "rel_path";
pub const LINE_START: &str = "line_start";
pub const LINE_END: &str = "line_end";
pub const UNIT_KIND: &str = "unit_kind";
pub const UNIT_NAME: &str = "unit_name";

pub fn paper_input(chunk: &PaperChunk) -> StoreInput {
    let metadata = BTreeMap::from([
        (SECTION_PATH.to_string(), chunk.section_label()),
        (HEADING_LEVEL.to_string(), chunk.heading_level.to_string()),
        (CHAR_START.to_string(), chunk.char_start.to_string()),
        (CHAR_END.to_string(), chunk.char_end.to_string()),
    ]);
    StoreInput {
        chunk_id: chunk.chunk_id.clone(),
        text: chunk.body.clone(),
        body: chunk.body.clone(),
        metadata,
    }
}

pub fn code_input(chunk: &CodeChunk) -> StoreInput {
    let mut metadata = BTreeMap::from([
        (REL_PATH.to_string(), chunk.rel_path.clone()),
        (LINE_START.to_string(), chunk.line_start.to_string()),
        (LINE_END.to_string(), chunk.line_end.to_string()),
        (UNIT_KIND.to_string(), chunk.unit_kind.as_str().to_string()),
    ]);
    if let Some(name) = &chunk.unit_name {
        metadata.insert(UNIT_NAME.to_string(), name.clone());
    }
    StoreInput {
        chunk_id: chunk.chunk_id.clone(),
        text: chunk.embedding_text(),
        body: chunk.body.clone(),
        metadata,
    }
}

/// `section: A > B` for paper chunks, `path:start-end` for code chunks.
pub fn provenance(source: Source, metadata: &BTreeMap<String, String>) -> String {
    let get = |k: &str| metadata.get(k).map(String::as_str).unwrap_or("?");
    match source {
        Source::Paper => format!("section: {}", get(SECTION_PATH)),
        Source::Code => format!("{}:{}-{}", get(REL_PATH), get(LINE_START), get(LINE_END)),
    }
}
