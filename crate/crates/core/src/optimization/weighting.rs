use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{OptimizationError, WeightedEdge, WeightedSubgraph};
use crate::kg_store::{Entity, KnowledgeGraph};
use crate::providers::{self, CallLedger, Embedder, EmbeddingVector, ProviderError, TypeWeightTable};
use crate::retrieval::Subgraph;
use crate::stats::quantile;

/// How per-keyword similarities combine into one score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeywordAggregation {
    #[default]
    Max,
    Mean,
}

/// Size-adaptive pruning quantile: `q = clamp(|E| / full_ramp_edges,
/// min_quantile, max_quantile)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneRamp {
    pub min_quantile: f64,
    pub max_quantile: f64,
    pub full_ramp_edges: usize,
}

impl Default for PruneRamp {
    fn default() -> Self {
        Self { min_quantile: 0.25, max_quantile: 0.75, full_ramp_edges: 400 }
    }
}

impl PruneRamp {
    pub fn quantile_for(&self, edge_count: usize) -> f64 {
        let ramp = edge_count as f64 / self.full_ramp_edges.max(1) as f64;
        ramp.max(self.min_quantile).min(self.max_quantile)
    }
}

/// `"<source name> <relation type, underscores as spaces> <target name>"`.
pub fn verbalize_triplet(source_name: &str, relation_type: &str, target_name: &str) -> String {
    format!("{} {} {}", source_name, relation_type.replace('_', " "), target_name)
}

/// Scores texts against a fixed keyword set: cosine mapped to `[0, 1]` via
/// `(c + 1) / 2`, aggregated over keywords.
pub struct SemanticScorer {
    keyword_vectors: Vec<EmbeddingVector>,
    aggregation: KeywordAggregation,
}

impl SemanticScorer {
    pub fn new(
        embedder: &dyn Embedder,
        keywords: &[String],
        aggregation: KeywordAggregation,
        ledger: &CallLedger,
    ) -> Result<Self, ProviderError> {
        if keywords.is_empty() {
            return Err(ProviderError::InvalidInput("semantic similarity needs at least one keyword".into()));
        }
        let keyword_vectors = ledger.call("embed", keywords, || providers::embed(embedder, keywords))?;
        Ok(Self { keyword_vectors, aggregation })
    }

    pub fn score(&self, v: &EmbeddingVector) -> f64 {
        let sims = self.keyword_vectors.iter().map(|k| ((v.cosine(k) + 1.0) / 2.0).clamp(0.0, 1.0));
        match self.aggregation {
            KeywordAggregation::Max => sims.fold(0.0, f64::max),
            KeywordAggregation::Mean => sims.sum::<f64>() / self.keyword_vectors.len() as f64,
        }
    }

    pub fn score_texts(
        &self,
        embedder: &dyn Embedder,
        texts: &[String],
        ledger: &CallLedger,
    ) -> Result<Vec<f64>, ProviderError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let vectors = ledger.call("embed", texts, || providers::embed(embedder, texts))?;
        if let Some(v) = vectors.first() {
            if v.dim() != self.keyword_vectors[0].dim() {
                return Err(ProviderError::DimensionDrift { expected: self.keyword_vectors[0].dim(), got: v.dim() });
            }
        }
        Ok(vectors.iter().map(|v| self.score(v)).collect())
    }
}

/// Similarity in `[0, 1]` between a triplet and the keyword set (max over
/// keywords).
pub fn semantic_similarity(
    triplet: (&Entity, &str, &Entity),
    keywords: &[String],
    embedder: &dyn Embedder,
) -> Result<f64, ProviderError> {
    let ledger = CallLedger::default();
    let scorer = SemanticScorer::new(embedder, keywords, KeywordAggregation::Max, &ledger)?;
    let text = verbalize_triplet(&triplet.0.name, triplet.1, &triplet.2.name);
    Ok(scorer.score_texts(embedder, &[text], &ledger)?[0])
}

/// Weights every edge of `sub` by semantic relevance times relation-type
/// weight. Nodes are carried over unchanged.
pub fn weight_edges(
    graph: &KnowledgeGraph,
    sub: &Subgraph,
    scorer: &SemanticScorer,
    weights: &TypeWeightTable,
    embedder: &dyn Embedder,
    ledger: &CallLedger,
) -> Result<WeightedSubgraph, ProviderError> {
    let texts: Vec<String> = sub
        .edges
        .keys()
        .map(|rel| {
            verbalize_triplet(&entity_name(graph, &rel.source), &rel.relation_type, &entity_name(graph, &rel.target))
        })
        .collect();
    let scores = scorer.score_texts(embedder, &texts, ledger)?;
    let edges = sub
        .edges
        .iter()
        .zip(scores)
        .map(|((rel, &origin), semantic)| {
            let type_weight = weights.weight(&rel.relation_type);
            WeightedEdge {
                relation: rel.clone(),
                weight: semantic * type_weight,
                semantic,
                type_weight,
                description: None,
                origin: Some(origin),
            }
        })
        .collect();
    Ok(WeightedSubgraph {
        nodes: sub.nodes.keys().cloned().collect(),
        edges,
        prune_threshold_used: None,
        completions: Vec::new(),
    })
}

pub(crate) fn entity_name(graph: &KnowledgeGraph, id: &str) -> String {
    graph.entity(id).map_or_else(|| id.to_owned(), |e| e.name.clone())
}

/// Pruning threshold for a weight multiset: the linear-interpolation
/// quantile at the size-dependent level given by `ramp`. `None` when there
/// are no weights.
pub fn adaptive_prune_threshold(weights: &[f64], ramp: &PruneRamp) -> Option<f64> {
    if weights.is_empty() {
        return None;
    }
    Some(quantile(weights, ramp.quantile_for(weights.len())))
}

/// Drops edges with weight below `theta`, then every node left without an
/// edge. Title nodes get no special treatment.
pub fn prune(wsub: &WeightedSubgraph, theta: f64) -> Result<WeightedSubgraph, OptimizationError> {
    if !theta.is_finite() {
        return Err(OptimizationError::InvalidInput(format!("pruning threshold {theta} is not finite")));
    }
    let edges: Vec<WeightedEdge> = wsub.edges.iter().filter(|e| e.weight >= theta).cloned().collect();
    if edges.is_empty() {
        return Err(OptimizationError::EmptySubgraph);
    }
    let touched: BTreeSet<&str> =
        edges.iter().flat_map(|e| [e.relation.source.as_str(), e.relation.target.as_str()]).collect();
    let nodes = wsub.nodes.iter().filter(|n| touched.contains(n.as_str())).cloned().collect();
    let completions = wsub
        .completions
        .iter()
        .filter(|c| {
            edges.iter().any(|e| e.relation.joins(&c.pair.0, &c.pair.1) && e.relation.relation_type == c.relation_type)
        })
        .cloned()
        .collect();
    Ok(WeightedSubgraph { nodes, edges, prune_threshold_used: Some(theta), completions })
}
