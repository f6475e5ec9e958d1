//! End-to-end query answering: retrieval, refinement, community detection
//! and answer generation, recorded in a [`RunReport`].

mod config;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::community::{anchor_communities, louvain, merge_to_max, verbalize};
use crate::entity_index::EntityIndex;
use crate::kg_store::{GraphError, KnowledgeGraph};
use crate::optimization::{
    adaptive_prune_threshold, complete, prune, weight_edges, OptimizationError, SemanticScorer, WeightedSubgraph,
};
use crate::providers::{
    self, CachedLanguageModel, CallLedger, CommunitySummary, Embedder, KeywordCandidates, LanguageModel, MockEmbedder,
    MockLanguageModel, PromptTemplates, ProviderError, RemoteConfig, RemoteEmbedder, RemoteLanguageModel,
};
use crate::retrieval::{assemble_subgraph, find_paths, pair_entities, title_neighbor_subgraph, Origin, Path};

pub use config::{MockSettings, PipelineConfig, RemoteSettings};
pub use report::{
    CandidateSummary, CommunityAnswer, CommunityEntry, CompletionSummary, PartitionSummary, RetrievalStats, RunFlags,
    RunReport, TripleMetrics, REPORT_SCHEMA,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("the query yielded no keywords")]
    EmptyKeywords,
    #[error(transparent)]
    Provider(ProviderError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot write {}: {error}", path.display())]
    Output { path: PathBuf, error: std::io::Error },
}

impl From<ProviderError> for PipelineError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::EmptyKeywords => PipelineError::EmptyKeywords,
            other => PipelineError::Provider(other),
        }
    }
}

impl From<OptimizationError> for PipelineError {
    fn from(e: OptimizationError) -> Self {
        match e {
            OptimizationError::Provider(p) => p.into(),
            other => PipelineError::Provider(ProviderError::InvalidInput(other.to_string())),
        }
    }
}

impl PipelineError {
    /// Process exit code for this error class. Usage errors (2) are
    /// reported by the argument parser.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Graph(_) => 3,
            PipelineError::EmptyKeywords => 4,
            PipelineError::Provider(_) => 5,
            PipelineError::Output { .. } => 6,
            PipelineError::Config(_) => 7,
        }
    }
}

/// Language model and embedder chosen for a run.
pub struct Providers {
    pub llm: Box<dyn LanguageModel>,
    pub embedder: Box<dyn Embedder>,
}

impl Providers {
    pub fn mock(config: &PipelineConfig) -> Self {
        let llm = MockLanguageModel::new(config.mock.target_types.clone())
            .with_default_weight(config.mock.default_type_weight);
        Self {
            llm: Box::new(CachedLanguageModel::in_memory(llm)),
            embedder: Box::new(MockEmbedder::new(config.mock.embedding_dim)),
        }
    }

    /// Remote providers configured from the environment and `config.remote`.
    pub fn remote(config: &PipelineConfig) -> Result<Self, PipelineError> {
        let settings = &config.remote;
        let mut remote = RemoteConfig::from_env().ok_or_else(|| {
            PipelineError::Config(format!(
                "no provider configured: set {} or pass --mock-providers",
                providers::ENV_LLM_URL
            ))
        })?;
        remote.max_in_flight = settings.max_in_flight;
        remote.timeout = Duration::from_secs(settings.timeout_secs);
        remote.default_type_weight = settings.default_type_weight;
        if let Some(path) = &settings.prompts {
            remote.prompts = PromptTemplates::from_file(path).map_err(PipelineError::Config)?;
        }
        let llm = RemoteLanguageModel::new(&remote);
        let llm: Box<dyn LanguageModel> = match &settings.cache_dir {
            Some(dir) => Box::new(CachedLanguageModel::on_disk(llm, dir).map_err(PipelineError::Provider)?),
            None => Box::new(CachedLanguageModel::in_memory(llm)),
        };
        Ok(Self { llm, embedder: Box::new(RemoteEmbedder::new(&remote)) })
    }
}

/// Answers `query` over `graph`. Only empty keyword extraction and
/// provider failures outside the per-pair and per-community stages are
/// errors; everything else degrades into a flagged report.
pub fn answer(
    query: &str,
    graph: &KnowledgeGraph,
    llm: &dyn LanguageModel,
    embedder: &dyn Embedder,
    config: &PipelineConfig,
) -> Result<RunReport, PipelineError> {
    config.validate().map_err(PipelineError::Config)?;
    let started = Instant::now();
    let ledger = CallLedger::new(config.record_timings);

    let mut ctx = ledger.call("extract", query, || providers::extract_context(llm, query))?;
    let (known, dropped): (Vec<String>, Vec<String>) =
        ctx.target_types.iter().cloned().partition(|t| graph.has_entity_type(t));
    for t in &dropped {
        log::warn!("dropping target type `{t}`: no entity of that type in the graph");
    }
    ctx.target_types = known;

    // candidate entities per keyword, then provider filtering
    let index = EntityIndex::build(graph);
    let groups: Vec<KeywordCandidates> = ctx
        .keywords
        .iter()
        .map(|k| KeywordCandidates { keyword: k.clone(), candidates: index.top_k(graph, k, config.top_k) })
        .collect();
    let filtered = ledger.call("filter_entities", &groups, || providers::filter_entities(llm, &ctx, &groups))?;
    let offered = graph.relation_types().clone();
    let allowed = ledger.call("filter_relations", &offered, || providers::filter_relations(llm, &ctx, &offered))?;

    let id_groups: Vec<Vec<String>> =
        filtered.iter().map(|g| g.candidates.iter().map(|c| c.entity.id.clone()).collect()).collect();
    let pairs = pair_entities(&id_groups);
    let paths: Vec<Path> = pairs
        .par_iter()
        .map(|(a, b)| find_paths(graph, (a, b), &allowed, config.max_hops, config.max_paths))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    let relevant: BTreeSet<String> = id_groups.iter().flatten().cloned().collect();
    let neighborhood = title_neighbor_subgraph(graph, &relevant, &ctx.target_types);
    let subgraph = assemble_subgraph(&paths, &neighborhood);

    let retrieval = RetrievalStats {
        candidates: groups
            .iter()
            .map(|g| CandidateSummary {
                keyword: g.keyword.clone(),
                candidates: g.candidates.iter().map(|c| (c.entity.id.clone(), c.score)).collect(),
            })
            .collect(),
        candidate_count: groups.iter().map(|g| g.candidates.len()).sum(),
        filtered_count: id_groups.iter().map(Vec::len).sum(),
        filtered: id_groups,
        relation_types_offered: offered.len(),
        relation_types_kept: allowed,
        pair_count: pairs.len(),
        path_count: paths.len(),
        subgraph_nodes: subgraph.node_count(),
        subgraph_edges: subgraph.edge_count(),
    };

    let mut report = RunReport {
        schema: REPORT_SCHEMA.to_owned(),
        context: ctx.clone(),
        dropped_target_types: dropped,
        retrieval,
        triples: TripleMetrics::default(),
        completion: CompletionSummary::default(),
        flags: RunFlags::default(),
        partition: PartitionSummary { max_communities: config.max_communities, ..Default::default() },
        community_answers: Vec::new(),
        final_answer: String::new(),
        refined_subgraph: WeightedSubgraph::default(),
        calls: Vec::new(),
        total_wall_ms: None,
    };

    if subgraph.edge_count() == 0 {
        report.flags.no_evidence = true;
        report.final_answer = providers::synthesize_final(llm, &[], &ctx)?;
        return Ok(finish(report, ledger, started, config));
    }

    // weighting and pruning
    let mut weighted_types: BTreeSet<String> = subgraph.edges.keys().map(|r| r.relation_type.clone()).collect();
    weighted_types.extend(config.completion.relation_vocabulary.iter().cloned());
    let weights =
        ledger.call("type_weights", &weighted_types, || providers::assign_type_weights(llm, &weighted_types))?;
    let scorer = SemanticScorer::new(embedder, &ctx.keywords, config.keyword_aggregation, &ledger)?;
    let weighted = weight_edges(graph, &subgraph, &scorer, &weights, embedder, &ledger)?;
    let edge_weights: Vec<f64> = weighted.edges.iter().map(|e| e.weight).collect();
    let (quantile, theta) = match config.fixed_prune_threshold {
        Some(t) => (None, Some(t)),
        None => (
            Some(config.prune.quantile_for(edge_weights.len())),
            adaptive_prune_threshold(&edge_weights, &config.prune),
        ),
    };
    let theta = theta.expect("subgraph has edges");
    report.triples.edges_before_prune = weighted.edge_count();
    report.triples.nodes_before_prune = weighted.node_count();
    report.triples.mean_semantic_before_prune = weighted.mean_semantic();
    report.triples.prune_quantile = quantile;
    report.triples.prune_threshold = Some(theta);

    let refined = match prune(&weighted, theta) {
        Ok(pruned) => {
            report.triples.edges_after_prune = pruned.edge_count();
            report.triples.nodes_after_prune = pruned.node_count();
            report.triples.mean_semantic_after_prune = pruned.mean_semantic();
            let outcome =
                complete(graph, &pruned, &ctx, llm, embedder, &scorer, &weights, &config.completion, &ledger)?;
            report.completion = CompletionSummary {
                projections: outcome.projections,
                added: outcome.subgraph.completions.clone(),
                failures: outcome.failures,
            };
            outcome.subgraph
        }
        Err(OptimizationError::EmptySubgraph) => {
            log::warn!("pruning at {theta} removed every edge; answering from the unpruned neighborhood");
            report.flags.empty_after_prune = true;
            let mut fallback = weighted.restricted_to(|e| e.origin != Some(Origin::FromPath));
            if fallback.edge_count() == 0 {
                fallback = weighted.restricted_to(|_| true);
            }
            fallback.prune_threshold_used = None;
            fallback
        }
        Err(e) => return Err(e.into()),
    };
    report.triples.edges_after_complete = refined.edge_count();
    report.triples.mean_semantic_after_complete = refined.mean_semantic();

    // communities
    let raw = louvain(&refined, config.max_communities);
    let mut partition = merge_to_max(&raw, &refined, config.max_communities);
    anchor_communities(graph, &refined, &mut partition);
    let verbalizations: Vec<String> = partition
        .communities
        .iter()
        .map(|c| verbalize(graph, &refined, &c.members, c.central_title.as_deref()))
        .collect();
    let summaries: Vec<_> = verbalizations
        .par_iter()
        .map(|text| ledger.call_detached("summarize", text, || providers::summarize_community(llm, text, &ctx)))
        .collect();
    let mut answered: Vec<CommunitySummary> = Vec::new();
    for ((community, text), (result, record)) in partition.communities.iter_mut().zip(verbalizations).zip(summaries) {
        ledger.push(record);
        let mut entry = CommunityAnswer {
            community: community.id,
            central_title: community.central_title.clone(),
            verbalization: text,
            theme: None,
            answer: None,
            error: None,
        };
        match result {
            Ok(summary) => {
                community.theme = Some(summary.theme.clone());
                entry.theme = Some(summary.theme.clone());
                entry.answer = Some(summary.answer.clone());
                answered.push(summary);
            }
            Err(e) => {
                log::warn!("community {} left unanswered: {e}", community.id);
                entry.error = Some(e.to_string());
            }
        }
        report.community_answers.push(entry);
    }
    report.final_answer = ledger.call("synthesize", &answered, || providers::synthesize_final(llm, &answered, &ctx))?;

    report.partition = PartitionSummary {
        modularity: partition.modularity,
        modularity_before_merge: raw.modularity,
        max_communities: partition.max_communities,
        communities: partition
            .communities
            .iter()
            .map(|c| CommunityEntry {
                id: c.id,
                members: c.members.iter().cloned().collect(),
                central_title: c.central_title.clone(),
                theme: c.theme.clone(),
            })
            .collect(),
        merges: partition.merges,
    };
    report.refined_subgraph = refined;
    Ok(finish(report, ledger, started, config))
}

fn finish(mut report: RunReport, ledger: CallLedger, started: Instant, config: &PipelineConfig) -> RunReport {
    report.calls = ledger.into_records();
    report.total_wall_ms = config.record_timings.then(|| started.elapsed().as_secs_f64() * 1e3);
    report
}

/// Community membership lookup for a finished report.
pub fn community_of(report: &RunReport) -> BTreeMap<&str, usize> {
    report.partition.communities.iter().flat_map(|c| c.members.iter().map(move |m| (m.as_str(), c.id))).collect()
}
