mod common;

use std::collections::BTreeSet;

use cegocd_core::kg_store::Entity;
use cegocd_core::pipeline::{answer, PipelineError, Providers, RunReport};
use cegocd_core::providers::{
    CommunitySummary, HiddenRelation, KeywordCandidates, LanguageModel, MockEmbedder, MockLanguageModel, ProviderError,
    QueryContext, TypeWeightTable, NO_EVIDENCE_ANSWER,
};
use common::*;

#[test]
fn golden_report_is_reproduced() {
    let golden = std::fs::read_to_string(fixture("golden_report.json")).unwrap();
    let config = scripted_config();
    let first = run_scripted(&config).to_json();
    let second = run_scripted(&config).to_json();
    assert_eq!(first, second);
    assert!(first == golden, "report differs from tests/fixtures/golden_report.json");
}

#[test]
fn report_round_trips() {
    let report = run_scripted(&scripted_config());
    let back = RunReport::from_json(&report.to_json()).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.schema, "cegocd-report/1");
}

#[test]
fn report_invariants() {
    let report = run_scripted(&scripted_config());
    let t = &report.triples;
    assert!(t.edges_after_prune < t.edges_before_prune);
    assert!(t.edges_after_complete > t.edges_after_prune);
    assert_eq!(t.edges_after_complete, t.edges_after_prune + report.completion.added.len());
    assert_eq!(t.edges_after_complete, report.refined_subgraph.edge_count());
    assert!(t.mean_semantic_after_prune >= t.mean_semantic_before_prune);

    let ids: BTreeSet<usize> = report.partition.communities.iter().map(|c| c.id).collect();
    assert!(report.partition.communities.len() <= 3);
    assert!(report.community_answers.iter().all(|a| ids.contains(&a.community)));
    let covered: BTreeSet<&String> = report.partition.communities.iter().flat_map(|c| &c.members).collect();
    assert_eq!(covered.len(), report.refined_subgraph.node_count());
    assert!(!report.final_answer.is_empty());
    assert!(report.calls.iter().all(|c| c.ok && c.wall_ms.is_none()));
    assert!(report.total_wall_ms.is_none());
}

#[test]
fn timings_recorded_by_default() {
    let mut config = scripted_config();
    config.record_timings = true;
    let report = run_scripted(&config);
    assert!(report.total_wall_ms.is_some());
    assert!(report.calls.iter().all(|c| c.wall_ms.is_some()));
}

#[test]
fn community_cap_of_one() {
    let mut config = scripted_config();
    config.max_communities = 1;
    let report = run_scripted(&config);
    assert_eq!(report.partition.communities.len(), 1);
    assert_eq!(report.community_answers.len(), 1);
    assert!(report.partition.modularity.abs() < 1e-12);
}

#[test]
fn over_aggressive_threshold_falls_back() {
    let mut config = scripted_config();
    config.fixed_prune_threshold = Some(2.0);
    let report = run_scripted(&config);
    assert!(report.flags.empty_after_prune);
    assert!(!report.flags.no_evidence);
    assert_eq!(report.triples.edges_after_prune, 0);
    assert!(report.completion.added.is_empty());
    assert!(report.triples.edges_after_complete > 0);
    assert!(report.triples.edges_after_complete <= report.triples.edges_before_prune);
    assert!(!report.community_answers.is_empty());
    assert_ne!(report.final_answer, NO_EVIDENCE_ANSWER);
}

#[test]
fn unmatched_keywords_give_no_evidence() {
    let config = scripted_config();
    let graph = graph();
    let p = Providers::mock(&config);
    let report = answer("zzzz qqqq", &graph, p.llm.as_ref(), p.embedder.as_ref(), &config).unwrap();
    assert!(report.flags.no_evidence);
    assert_eq!(report.final_answer, NO_EVIDENCE_ANSWER);
    assert_eq!(report.retrieval.subgraph_edges, 0);
    assert!(report.partition.communities.is_empty());
}

#[test]
fn zero_keywords_is_an_error() {
    let config = scripted_config();
    let graph = graph();
    let p = Providers::mock(&config);
    let err = answer("a b c", &graph, p.llm.as_ref(), p.embedder.as_ref(), &config).unwrap_err();
    assert!(matches!(err, PipelineError::EmptyKeywords));
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn unknown_target_types_are_dropped() {
    let mut config = scripted_config();
    config.mock.target_types = vec!["Model".into(), "Venue".into()];
    let report = run_scripted(&config);
    assert_eq!(report.context.target_types, vec!["Model".to_string()]);
    assert_eq!(report.dropped_target_types, vec!["Venue".to_string()]);
}

/// Mock wrapper with injectable failures.
struct Faulty {
    inner: MockLanguageModel,
    fail_summaries: bool,
    invent_entity: bool,
}

impl LanguageModel for Faulty {
    fn name(&self) -> &str {
        "faulty"
    }
    fn extract_context(&self, query: &str) -> Result<QueryContext, ProviderError> {
        self.inner.extract_context(query)
    }
    fn filter_entities(
        &self,
        ctx: &QueryContext,
        groups: &[KeywordCandidates],
    ) -> Result<Vec<Vec<String>>, ProviderError> {
        let mut kept = self.inner.filter_entities(ctx, groups)?;
        if self.invent_entity {
            kept[0].push("NOT-A-CANDIDATE".into());
        }
        Ok(kept)
    }
    fn filter_relations(
        &self,
        ctx: &QueryContext,
        types: &BTreeSet<String>,
    ) -> Result<BTreeSet<String>, ProviderError> {
        self.inner.filter_relations(ctx, types)
    }
    fn assign_type_weights(&self, types: &BTreeSet<String>) -> Result<TypeWeightTable, ProviderError> {
        self.inner.assign_type_weights(types)
    }
    fn judge_hidden_relation(
        &self,
        pair: (&Entity, &Entity),
        ctx: &QueryContext,
    ) -> Result<Option<HiddenRelation>, ProviderError> {
        self.inner.judge_hidden_relation(pair, ctx)
    }
    fn summarize_community(&self, text: &str, ctx: &QueryContext) -> Result<CommunitySummary, ProviderError> {
        if self.fail_summaries {
            return Err(ProviderError::Transport("connection reset".into()));
        }
        self.inner.summarize_community(text, ctx)
    }
    fn synthesize_final(&self, answers: &[CommunitySummary], ctx: &QueryContext) -> Result<String, ProviderError> {
        self.inner.synthesize_final(answers, ctx)
    }
}

fn faulty(fail_summaries: bool, invent_entity: bool) -> Faulty {
    Faulty {
        inner: MockLanguageModel::new(vec!["Model".into(), "Dataset".into(), "Task".into()]),
        fail_summaries,
        invent_entity,
    }
}

#[test]
fn failed_summaries_leave_communities_unanswered() {
    let config = scripted_config();
    let graph = graph();
    let llm = faulty(true, false);
    let report = answer(&scripted_query(), &graph, &llm, &MockEmbedder::default(), &config).unwrap();
    assert!(!report.community_answers.is_empty());
    assert!(report.community_answers.iter().all(|a| a.answer.is_none() && a.error.is_some()));
    assert_eq!(report.final_answer, NO_EVIDENCE_ANSWER);
    assert!(report.calls.iter().any(|c| c.operation == "summarize" && !c.ok));
}

#[test]
fn invented_entity_is_a_protocol_error() {
    let config = scripted_config();
    let graph = graph();
    let llm = faulty(false, true);
    let err = answer(&scripted_query(), &graph, &llm, &MockEmbedder::default(), &config).unwrap_err();
    assert!(matches!(err, PipelineError::Provider(ProviderError::Protocol(_))), "{err}");
    assert_eq!(err.exit_code(), 5);
}
