//! Checks whether a codebase implements the method a research paper
//! describes.
//!
//! The pipeline segments the paper and the code, embeds both into separate
//! vector stores, runs a battery of verification questions against each,
//! asks a language model to compare the retrieved evidence, and renders a
//! scored report.

pub mod analyzer;
pub mod chunk_meta;
pub mod code_ingest;
pub mod embed_store;
pub mod http;
pub mod orchestrator;
pub mod paper_ingest;
pub mod reporter;
pub mod retriever;
