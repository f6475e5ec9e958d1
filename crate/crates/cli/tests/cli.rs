use std::path::PathBuf;
use std::process::{Command, Output};

use cegocd_core::RunReport;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

const QUERY: &str = "question answering retrieval datasets";

fn cegocd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cegocd"))
        .args(args)
        .env_remove("CEGOCD_LLM_URL")
        .env_remove("CEGOCD_EMBED_URL")
        .output()
        .expect("binary runs")
}

fn path_str(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn scripted_query_writes_the_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let sub = dir.path().join("subgraph.json");
    let graph = fixture("toy_kg.jsonl");
    let config = fixture("scripted_config.toml");
    let run = cegocd(&[
        "--graph",
        path_str(&graph),
        "--query",
        QUERY,
        "--config",
        path_str(&config),
        "--mock-providers",
        "--out",
        path_str(&out),
        "--emit-subgraph",
        path_str(&sub),
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(run.stdout.is_empty());
    let written = std::fs::read_to_string(&out).unwrap();
    assert_eq!(written, std::fs::read_to_string(fixture("golden_report.json")).unwrap());

    let report = RunReport::from_json(&written).unwrap();
    let subgraph: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sub).unwrap()).unwrap();
    assert_eq!(subgraph, serde_json::to_value(&report.refined_subgraph).unwrap());
}

#[test]
fn report_goes_to_stdout_without_out() {
    let graph = fixture("toy_kg.jsonl");
    let run = cegocd(&["--graph", path_str(&graph), "--query", QUERY, "--mock-providers", "--theta-max", "1"]);
    assert_eq!(run.status.code(), Some(0));
    let report = RunReport::from_json(&String::from_utf8(run.stdout).unwrap()).unwrap();
    assert_eq!(report.partition.communities.len(), 1);
}

#[test]
fn in_process_entry_point_matches() {
    let graph = fixture("toy_kg.jsonl");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let code = cegocd_cli::run_cli([
        "cegocd",
        "--graph",
        path_str(&graph),
        "--query",
        QUERY,
        "--mock-providers",
        "--max-hops",
        "2",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code, 0);
    let report = RunReport::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(report.retrieval.path_count > 0);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(cegocd(&["--query", QUERY]).status.code(), Some(2));
    assert_eq!(cegocd(&["--graph", "g.jsonl", "--query", QUERY, "--bogus"]).status.code(), Some(2));
    assert_eq!(cegocd(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_graph_exits_3() {
    let run = cegocd(&["--graph", "/nonexistent/kg.jsonl", "--query", QUERY, "--mock-providers"]);
    assert_eq!(run.status.code(), Some(3));
}

#[test]
fn zero_keyword_query_exits_4() {
    let graph = fixture("toy_kg.jsonl");
    let run = cegocd(&["--graph", path_str(&graph), "--query", "a b c", "--mock-providers"]);
    assert_eq!(run.status.code(), Some(4));
    assert!(run.stdout.is_empty());
}

#[test]
fn unwritable_output_exits_6() {
    let graph = fixture("toy_kg.jsonl");
    let run = cegocd(&[
        "--graph",
        path_str(&graph),
        "--query",
        QUERY,
        "--mock-providers",
        "--out",
        "/nonexistent/dir/r.json",
    ]);
    assert_eq!(run.status.code(), Some(6));
}

#[test]
fn configuration_errors_exit_7() {
    let graph = fixture("toy_kg.jsonl");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "no_such_key = 1\n").unwrap();
    let run = cegocd(&["--graph", path_str(&graph), "--query", QUERY, "--mock-providers", "--config", path_str(&bad)]);
    assert_eq!(run.status.code(), Some(7));

    let run = cegocd(&["--graph", path_str(&graph), "--query", QUERY, "--mock-providers", "--theta-max", "0"]);
    assert_eq!(run.status.code(), Some(7));

    // remote providers without an endpoint
    let run = cegocd(&["--graph", path_str(&graph), "--query", QUERY]);
    assert_eq!(run.status.code(), Some(7));
    assert!(String::from_utf8_lossy(&run.stderr).contains("CEGOCD_LLM_URL"));
}
