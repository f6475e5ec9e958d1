#![allow(dead_code)]

use std::path::PathBuf;

use cegocd_core::kg_store::{load_graph, KnowledgeGraph};
use cegocd_core::pipeline::{answer, PipelineConfig, Providers, RunReport};
use serde_json::Value;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn graph() -> KnowledgeGraph {
    load_graph(fixture("toy_kg.jsonl")).expect("fixture loads").0
}

/// Value of one manifest entry.
pub fn manifest(key: &str) -> Value {
    let text = std::fs::read_to_string(fixture("manifest.json")).expect("manifest present");
    let root: Value = serde_json::from_str(&text).expect("manifest is JSON");
    root["entries"][key]["value"].clone()
}

pub fn scripted_config() -> PipelineConfig {
    PipelineConfig::from_file(&fixture("scripted_config.toml")).expect("config parses")
}

pub fn scripted_query() -> String {
    manifest("pipeline.scripted_run")["query"].as_str().unwrap().to_owned()
}

pub fn run_scripted(config: &PipelineConfig) -> RunReport {
    let graph = graph();
    let providers = Providers::mock(config);
    answer(&scripted_query(), &graph, providers.llm.as_ref(), providers.embedder.as_ref(), config)
        .expect("run succeeds")
}

pub fn strings(v: &Value) -> Vec<String> {
    v.as_array().unwrap().iter().map(|x| x.as_str().unwrap().to_owned()).collect()
}

pub fn edge_triple(v: &Value) -> (String, String, String) {
    let a = strings(v);
    (a[0].clone(), a[1].clone(), a[2].clone())
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
