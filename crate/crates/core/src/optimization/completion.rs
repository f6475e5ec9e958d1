//! Completion of implicit relations between same-type entities.
//!
//! Entity names of one type are embedded and projected onto their first
//! principal component. Pairs closer than `Q3(gaps) + factor * IQR(gaps)`
//! on that line are put to the language model, and accepted proposals join
//! the subgraph as `Completed` edges.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::weighting::{entity_name, verbalize_triplet, SemanticScorer};
use super::{CompletionRecord, OptimizationError, WeightedEdge, WeightedSubgraph};
use crate::kg_store::{KnowledgeGraph, Provenance, Relation};
use crate::providers::{
    self, CallLedger, Embedder, EmbeddingVector, LanguageModel, QueryContext, TypeWeightTable,
    COMPLETION_RELATION_TYPES,
};
use crate::stats::quantile_sorted;

const POWER_ITERATION_TOLERANCE: f64 = 1e-8;
const POWER_ITERATION_MAX_STEPS: usize = 100_000;
const LOADING_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompletionConfig {
    pub relation_vocabulary: Vec<String>,
    pub iqr_factor: f64,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self { relation_vocabulary: COMPLETION_RELATION_TYPES.iter().map(|s| s.to_string()).collect(), iqr_factor: 1.0 }
    }
}

/// One entity type's projection and threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub entity_type: String,
    /// Sorted by id; `z[i]` belongs to `entity_ids[i]`.
    pub entity_ids: Vec<String>,
    pub z: Vec<f64>,
    /// Consecutive gaps of the ascending-sorted coordinates.
    pub gaps: Vec<f64>,
    pub threshold: f64,
    pub candidate_pairs: usize,
    pub judged: usize,
    pub accepted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionOutcome {
    pub subgraph: WeightedSubgraph,
    pub projections: Vec<ProjectionResult>,
    /// Pairs skipped because the provider failed on them.
    pub failures: usize,
}

/// Coordinates of the mean-centered vectors along their first principal
/// component (power iteration on the sample covariance). The component is
/// sign-flipped if its first non-zero loading is negative. Identical
/// vectors give all-zero coordinates.
pub fn project_1d(vectors: &[EmbeddingVector]) -> Result<Vec<f64>, OptimizationError> {
    let n = vectors.len();
    if n < 2 {
        return Err(OptimizationError::InvalidInput(format!("projection needs at least 2 vectors, got {n}")));
    }
    let d = vectors[0].dim();
    if d == 0 || vectors.iter().any(|v| v.dim() != d) {
        return Err(OptimizationError::InvalidInput("vectors must share a positive dimension".into()));
    }

    if vectors.iter().all(|v| v.values == vectors[0].values) {
        return Ok(vec![0.0; n]);
    }
    let mut mean = vec![0.0; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(&v.values) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> =
        vectors.iter().map(|v| v.values.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect();

    let mut cov = vec![vec![0.0; d]; d];
    for row in &centered {
        for i in 0..d {
            if row[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                cov[i][j] += row[i] * row[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    cov.iter_mut().flatten().for_each(|c| *c /= denom);

    // start from the centered row with the largest norm
    let start = centered.iter().max_by(|a, b| norm(a).total_cmp(&norm(b))).expect("n >= 2");
    let mut v: Vec<f64> = start.iter().map(|x| x / norm(start)).collect();
    for _ in 0..POWER_ITERATION_MAX_STEPS {
        let w: Vec<f64> = cov.iter().map(|row| dot(row, &v)).collect();
        let len = norm(&w);
        if len == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let next: Vec<f64> = w.iter().map(|x| x / len).collect();
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        v = next;
        if change < POWER_ITERATION_TOLERANCE {
            break;
        }
    }
    if v.iter().find(|x| x.abs() > LOADING_EPS).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(centered.iter().map(|row| dot(row, &v)).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Ascending-sorted consecutive gaps of `z`.
pub fn sorted_gaps(z: &[f64]) -> Vec<f64> {
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).map(|w| (w[1] - w[0]).abs()).collect()
}

/// `Q3(gaps) + IQR(gaps)`; `None` for fewer than three coordinates.
pub fn completion_threshold(z: &[f64]) -> Option<f64> {
    completion_threshold_with(z, 1.0)
}

/// `Q3(gaps) + iqr_factor * (Q3(gaps) - Q1(gaps))` with linear-interpolation
/// quartiles over the gaps of the sorted coordinates.
pub fn completion_threshold_with(z: &[f64], iqr_factor: f64) -> Option<f64> {
    if z.len() < 3 {
        return None;
    }
    let mut gaps = sorted_gaps(z);
    gaps.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&gaps, 0.25);
    let q3 = quantile_sorted(&gaps, 0.75);
    Some(q3 + iqr_factor * (q3 - q1))
}

/// Index pairs `(i, j)`, `i < j`, with `|z_i - z_j| <= theta`, ascending.
pub fn candidate_pairs(z: &[f64], theta: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            if (z[i] - z[j]).abs() <= theta {
                out.push((i, j));
            }
        }
    }
    out
}

/// Adds `Completed` edges between same-type entities of each target type.
/// Existing nodes and edges are never removed.
#[allow(clippy::too_many_arguments)]
pub fn complete(
    graph: &KnowledgeGraph,
    wsub: &WeightedSubgraph,
    ctx: &QueryContext,
    llm: &dyn LanguageModel,
    embedder: &dyn Embedder,
    scorer: &SemanticScorer,
    weights: &TypeWeightTable,
    config: &CompletionConfig,
    ledger: &CallLedger,
) -> Result<CompletionOutcome, OptimizationError> {
    let mut out = wsub.clone();
    let mut projections = Vec::new();
    let mut failures = 0;
    let mut seen_types = Vec::new();

    for ty in &ctx.target_types {
        if seen_types.contains(ty) {
            continue;
        }
        seen_types.push(ty.clone());
        let members: Vec<&str> = wsub
            .nodes
            .iter()
            .map(String::as_str)
            .filter(|id| graph.entity(id).is_some_and(|e| &e.entity_type == ty))
            .collect();
        if members.len() < 3 {
            continue;
        }
        let names: Vec<String> = members.iter().map(|id| embed_text(graph, id)).collect();
        let vectors = match ledger.call("embed", &names, || providers::embed(embedder, &names)) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("skipping completion for type `{ty}`: {e}");
                failures += 1;
                continue;
            }
        };
        let z = project_1d(&vectors)?;
        let threshold = completion_threshold_with(&z, config.iqr_factor).expect("at least three members");
        let pairs: Vec<(usize, usize)> = candidate_pairs(&z, threshold)
            .into_iter()
            .filter(|&(i, j)| !wsub.adjacent(members[i], members[j]))
            .collect();

        let verdicts: Vec<_> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let a = graph.entity(members[i]).expect("member exists");
                let b = graph.entity(members[j]).expect("member exists");
                let input = (&a.id, &b.id, &ctx.keywords);
                ledger.call_detached("judge_pair", &input, || {
                    providers::judge_hidden_relation(llm, (a, b), ctx, &config.relation_vocabulary)
                })
            })
            .collect();

        let mut accepted = Vec::new();
        for (&(i, j), (verdict, record)) in pairs.iter().zip(verdicts) {
            ledger.push(record);
            match verdict {
                Ok(Some(rel)) => accepted.push((members[i], members[j], rel)),
                Ok(None) => {}
                Err(e) => {
                    log::warn!("skipping pair ({}, {}): {e}", members[i], members[j]);
                    failures += 1;
                }
            }
        }

        let texts: Vec<String> = accepted
            .iter()
            .map(|(a, b, rel)| verbalize_triplet(&entity_name(graph, a), &rel.relation_type, &entity_name(graph, b)))
            .collect();
        let scores = match scorer.score_texts(embedder, &texts, ledger) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("dropping completions for type `{ty}`: {e}");
                failures += accepted.len();
                accepted.clear();
                Vec::new()
            }
        };
        for ((a, b, rel), semantic) in accepted.iter().zip(&scores) {
            let type_weight = weights.weight(&rel.relation_type);
            let weight = semantic * type_weight;
            out.edges.push(WeightedEdge {
                relation: Relation {
                    source: a.to_string(),
                    target: b.to_string(),
                    relation_type: rel.relation_type.clone(),
                    provenance: Provenance::Completed,
                },
                weight,
                semantic: *semantic,
                type_weight,
                description: Some(rel.description.clone()),
                origin: None,
            });
            out.completions.push(CompletionRecord {
                pair: (a.to_string(), b.to_string()),
                relation_type: rel.relation_type.clone(),
                description: rel.description.clone(),
                weight,
            });
        }

        projections.push(ProjectionResult {
            entity_type: ty.clone(),
            entity_ids: members.iter().map(|s| s.to_string()).collect(),
            gaps: sorted_gaps(&z),
            z,
            threshold,
            candidate_pairs: pairs.len(),
            judged: pairs.len(),
            accepted: accepted.len(),
        });
    }

    out.edges.sort_by(|a, b| a.relation.cmp(&b.relation));
    out.completions.sort_by(|a, b| (&a.pair, &a.relation_type).cmp(&(&b.pair, &b.relation_type)));
    Ok(CompletionOutcome { subgraph: out, projections, failures })
}

fn embed_text(graph: &KnowledgeGraph, id: &str) -> String {
    let name = entity_name(graph, id);
    if name.trim().is_empty() {
        id.to_owned()
    } else {
        name
    }
}
