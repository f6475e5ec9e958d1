//! Inputs shared by the benchmarks.

use std::path::PathBuf;

use cegocd_core::kg_store::{load_graph, KnowledgeGraph};
use cegocd_core::pipeline::PipelineConfig;

pub const QUERY: &str = "question answering retrieval datasets";

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

pub fn fixture_graph() -> KnowledgeGraph {
    load_graph(fixture("toy_kg.jsonl")).expect("fixture graph loads").0
}

pub fn scripted_config() -> PipelineConfig {
    PipelineConfig::from_file(&fixture("scripted_config.toml")).expect("fixture config parses")
}
