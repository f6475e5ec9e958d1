//! The JSON run report.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::community::MergeStep;
use crate::optimization::{CompletionRecord, ProjectionResult, WeightedSubgraph};
use crate::providers::{CallRecord, QueryContext};

pub const REPORT_SCHEMA: &str = "cegocd-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub context: QueryContext,
    /// Target types the graph has no entities of.
    pub dropped_target_types: Vec<String>,
    pub retrieval: RetrievalStats,
    pub triples: TripleMetrics,
    pub completion: CompletionSummary,
    pub flags: RunFlags,
    pub partition: PartitionSummary,
    pub community_answers: Vec<CommunityAnswer>,
    pub final_answer: String,
    /// The subgraph handed to community detection.
    pub refined_subgraph: WeightedSubgraph,
    pub calls: Vec<CallRecord>,
    pub total_wall_ms: Option<f64>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub keyword: String,
    /// `(entity id, score)`, best first.
    pub candidates: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalStats {
    pub candidates: Vec<CandidateSummary>,
    pub candidate_count: usize,
    /// Ids kept per keyword, in keyword order.
    pub filtered: Vec<Vec<String>>,
    pub filtered_count: usize,
    pub relation_types_offered: usize,
    pub relation_types_kept: BTreeSet<String>,
    pub pair_count: usize,
    pub path_count: usize,
    pub subgraph_nodes: usize,
    pub subgraph_edges: usize,
}

/// Edge counts and mean keyword relevance at each refinement stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TripleMetrics {
    pub edges_before_prune: usize,
    pub edges_after_prune: usize,
    pub edges_after_complete: usize,
    pub nodes_before_prune: usize,
    pub nodes_after_prune: usize,
    pub mean_semantic_before_prune: Option<f64>,
    pub mean_semantic_after_prune: Option<f64>,
    pub mean_semantic_after_complete: Option<f64>,
    pub prune_quantile: Option<f64>,
    pub prune_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompletionSummary {
    pub projections: Vec<ProjectionResult>,
    pub added: Vec<CompletionRecord>,
    pub failures: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunFlags {
    /// Retrieval found nothing to reason over.
    pub no_evidence: bool,
    /// Pruning removed every edge; the unpruned neighborhood was used and
    /// completion was skipped.
    pub empty_after_prune: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityEntry {
    pub id: usize,
    pub members: Vec<String>,
    pub central_title: Option<String>,
    pub theme: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub modularity: f64,
    /// Modularity straight out of Louvain, before capping.
    pub modularity_before_merge: f64,
    pub max_communities: usize,
    pub communities: Vec<CommunityEntry>,
    pub merges: Vec<MergeStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityAnswer {
    pub community: usize,
    pub central_title: Option<String>,
    pub verbalization: String,
    pub theme: Option<String>,
    pub answer: Option<String>,
    /// Set when the provider failed; the community stays unanswered.
    pub error: Option<String>,
}
