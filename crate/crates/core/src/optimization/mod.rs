//! Subgraph refinement: relevance weighting and pruning, followed by
//! completion of implicit same-type relations.

mod completion;
mod weighting;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg_store::{Provenance, Relation};
use crate::providers::ProviderError;
use crate::retrieval::Origin;
use crate::stats::mean;

pub use completion::{
    candidate_pairs, complete, completion_threshold, completion_threshold_with, project_1d, sorted_gaps,
    CompletionConfig, CompletionOutcome, ProjectionResult,
};
pub use weighting::{
    adaptive_prune_threshold, prune, semantic_similarity, verbalize_triplet, weight_edges, KeywordAggregation,
    PruneRamp, SemanticScorer,
};

#[derive(Debug, Error)]
pub enum OptimizationError {
    #[error("pruning removed every edge of the subgraph")]
    EmptySubgraph,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedEdge {
    pub relation: Relation,
    /// `semantic * type_weight`, in `[0, 1]`.
    pub weight: f64,
    pub semantic: f64,
    pub type_weight: f64,
    /// Set for completed edges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Retrieval origin; `None` for completed edges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Origin>,
}

impl WeightedEdge {
    pub fn provenance(&self) -> Provenance {
        self.relation.provenance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub pair: (String, String),
    pub relation_type: String,
    pub description: String,
    pub weight: f64,
}

/// A subgraph whose edges carry relevance weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedSubgraph {
    pub nodes: BTreeSet<String>,
    /// Sorted by relation.
    pub edges: Vec<WeightedEdge>,
    pub prune_threshold_used: Option<f64>,
    pub completions: Vec<CompletionRecord>,
}

impl WeightedSubgraph {
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Mean semantic score over all edges, `None` without edges.
    pub fn mean_semantic(&self) -> Option<f64> {
        mean(self.edges.iter().map(|e| e.semantic))
    }

    /// True if some edge joins `a` and `b`, any type, either direction.
    pub fn adjacent(&self, a: &str, b: &str) -> bool {
        self.edges.iter().any(|e| e.relation.joins(a, b))
    }

    /// Nodes with no incident edge.
    pub fn isolated_nodes(&self) -> Vec<&str> {
        let touched: BTreeSet<&str> =
            self.edges.iter().flat_map(|e| [e.relation.source.as_str(), e.relation.target.as_str()]).collect();
        self.nodes.iter().map(String::as_str).filter(|n| !touched.contains(n)).collect()
    }

    /// Keeps only edges satisfying `keep` and nodes that still have an edge.
    pub fn restricted_to(&self, keep: impl Fn(&WeightedEdge) -> bool) -> WeightedSubgraph {
        let edges: Vec<WeightedEdge> = self.edges.iter().filter(|e| keep(e)).cloned().collect();
        let nodes = edges.iter().flat_map(|e| [e.relation.source.clone(), e.relation.target.clone()]).collect();
        WeightedSubgraph { nodes, edges, prune_threshold_used: self.prune_threshold_used, completions: Vec::new() }
    }
}
