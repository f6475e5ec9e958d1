//! Language-model and embedding backends.
//!
//! Backends implement [`LanguageModel`] and [`Embedder`]. The pipeline never
//! calls trait methods directly; it goes through the free functions in this
//! module, which enforce the contracts every backend must honor (filters
//! only remove, weights lie in `[0, 1]`, embeddings have one dimension per
//! run, ...).

mod cache;
mod ledger;
mod mock;
mod prompts;
mod remote;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entity_index::ScoredEntity;
use crate::kg_store::Entity;

pub use cache::CachedLanguageModel;
pub use ledger::{estimate_tokens, CallLedger, CallRecord};
pub use mock::{mock_embedding, MockEmbedder, MockLanguageModel, MOCK_EMBEDDING_DIM};
pub use prompts::PromptTemplates;
pub use remote::{RemoteConfig, RemoteEmbedder, RemoteLanguageModel, ENV_EMBED_URL, ENV_LLM_TOKEN, ENV_LLM_URL};

/// Relation types the completion stage may introduce.
pub const COMPLETION_RELATION_TYPES: [&str; 3] = ["similar_to", "related_method", "related_task"];

/// Final answer used when no community produced an answer.
pub const NO_EVIDENCE_ANSWER: &str = "No evidence was found in the knowledge graph for this query.";

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider transport failure: {0}")]
    Transport(String),
    #[error("provider protocol violation: {0}")]
    Protocol(String),
    #[error("no keywords could be extracted from the query")]
    EmptyKeywords,
    #[error("invalid provider input: {0}")]
    InvalidInput(String),
    #[error("embedding dimension changed within a run: expected {expected}, got {got}")]
    DimensionDrift { expected: usize, got: usize },
    #[error("provider cache error: {0}")]
    Cache(String),
}

/// The query together with the keywords and target entity types extracted
/// from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryContext {
    pub query: String,
    pub keywords: Vec<String>,
    pub target_types: Vec<String>,
}

/// Per-relation-type weights in `[0, 1]` with a fallback for unlisted types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeWeightTable {
    pub weights: BTreeMap<String, f64>,
    pub default_weight: f64,
}

impl TypeWeightTable {
    pub fn uniform(types: impl IntoIterator<Item = String>, weight: f64, default_weight: f64) -> Self {
        Self { weights: types.into_iter().map(|t| (t, weight)).collect(), default_weight }
    }

    pub fn weight(&self, relation_type: &str) -> f64 {
        self.weights.get(relation_type).copied().unwrap_or(self.default_weight)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            (dot / denom).clamp(-1.0, 1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenRelation {
    pub relation_type: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunitySummary {
    pub theme: String,
    pub answer: String,
}

/// TF-IDF candidates retrieved for one keyword.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordCandidates {
    pub keyword: String,
    pub candidates: Vec<ScoredEntity>,
}

pub trait LanguageModel: Send + Sync {
    /// Stable identifier, used as part of cache keys.
    fn name(&self) -> &str;

    fn extract_context(&self, query: &str) -> Result<QueryContext, ProviderError>;

    /// Returns, for each keyword group, the ids of the candidates to keep.
    fn filter_entities(
        &self,
        ctx: &QueryContext,
        groups: &[KeywordCandidates],
    ) -> Result<Vec<Vec<String>>, ProviderError>;

    fn filter_relations(
        &self,
        ctx: &QueryContext,
        candidate_types: &BTreeSet<String>,
    ) -> Result<BTreeSet<String>, ProviderError>;

    /// Raw weights; range checking happens in [`assign_type_weights`].
    fn assign_type_weights(&self, types: &BTreeSet<String>) -> Result<TypeWeightTable, ProviderError>;

    fn judge_hidden_relation(
        &self,
        pair: (&Entity, &Entity),
        ctx: &QueryContext,
    ) -> Result<Option<HiddenRelation>, ProviderError>;

    fn summarize_community(&self, verbalization: &str, ctx: &QueryContext) -> Result<CommunitySummary, ProviderError>;

    fn synthesize_final(&self, answers: &[CommunitySummary], ctx: &QueryContext) -> Result<String, ProviderError>;
}

pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError>;
}

impl<T: LanguageModel + ?Sized> LanguageModel for &T {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn extract_context(&self, query: &str) -> Result<QueryContext, ProviderError> {
        (**self).extract_context(query)
    }
    fn filter_entities(
        &self,
        ctx: &QueryContext,
        groups: &[KeywordCandidates],
    ) -> Result<Vec<Vec<String>>, ProviderError> {
        (**self).filter_entities(ctx, groups)
    }
    fn filter_relations(
        &self,
        ctx: &QueryContext,
        candidate_types: &BTreeSet<String>,
    ) -> Result<BTreeSet<String>, ProviderError> {
        (**self).filter_relations(ctx, candidate_types)
    }
    fn assign_type_weights(&self, types: &BTreeSet<String>) -> Result<TypeWeightTable, ProviderError> {
        (**self).assign_type_weights(types)
    }
    fn judge_hidden_relation(
        &self,
        pair: (&Entity, &Entity),
        ctx: &QueryContext,
    ) -> Result<Option<HiddenRelation>, ProviderError> {
        (**self).judge_hidden_relation(pair, ctx)
    }
    fn summarize_community(&self, verbalization: &str, ctx: &QueryContext) -> Result<CommunitySummary, ProviderError> {
        (**self).summarize_community(verbalization, ctx)
    }
    fn synthesize_final(&self, answers: &[CommunitySummary], ctx: &QueryContext) -> Result<String, ProviderError> {
        (**self).synthesize_final(answers, ctx)
    }
}

impl<T: Embedder + ?Sized> Embedder for &T {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        (**self).embed(texts)
    }
}

/// Extracts keywords and target types. Blank keywords are dropped; an empty
/// keyword set is reported as [`ProviderError::EmptyKeywords`].
pub fn extract_context(llm: &dyn LanguageModel, query: &str) -> Result<QueryContext, ProviderError> {
    if query.trim().is_empty() {
        return Err(ProviderError::EmptyKeywords);
    }
    let mut ctx = llm.extract_context(query)?;
    ctx.query = query.to_owned();
    let mut seen = HashSet::new();
    ctx.keywords = ctx
        .keywords
        .into_iter()
        .map(|k| k.trim().to_owned())
        .filter(|k| !k.is_empty() && seen.insert(k.clone()))
        .collect();
    if ctx.keywords.is_empty() {
        return Err(ProviderError::EmptyKeywords);
    }
    Ok(ctx)
}

/// Filters per-keyword candidates. Every kept id must come from the group
/// it was offered in; input order is preserved.
pub fn filter_entities(
    llm: &dyn LanguageModel,
    ctx: &QueryContext,
    groups: &[KeywordCandidates],
) -> Result<Vec<KeywordCandidates>, ProviderError> {
    if groups.iter().all(|g| g.candidates.is_empty()) {
        return Ok(groups.to_vec());
    }
    let kept = llm.filter_entities(ctx, groups)?;
    if kept.len() != groups.len() {
        return Err(ProviderError::Protocol(format!(
            "filter_entities returned {} groups for {} keywords",
            kept.len(),
            groups.len()
        )));
    }
    groups
        .iter()
        .zip(kept)
        .map(|(group, ids)| {
            let offered: HashSet<&str> = group.candidates.iter().map(|c| c.entity.id.as_str()).collect();
            if let Some(bad) = ids.iter().find(|id| !offered.contains(id.as_str())) {
                return Err(ProviderError::Protocol(format!(
                    "filter_entities kept `{bad}`, which was not a candidate for keyword `{}`",
                    group.keyword
                )));
            }
            let keep: HashSet<&str> = ids.iter().map(String::as_str).collect();
            Ok(KeywordCandidates {
                keyword: group.keyword.clone(),
                candidates: group.candidates.iter().filter(|c| keep.contains(c.entity.id.as_str())).cloned().collect(),
            })
        })
        .collect()
}

pub fn filter_relations(
    llm: &dyn LanguageModel,
    ctx: &QueryContext,
    candidate_types: &BTreeSet<String>,
) -> Result<BTreeSet<String>, ProviderError> {
    if candidate_types.is_empty() {
        return Ok(BTreeSet::new());
    }
    let kept = llm.filter_relations(ctx, candidate_types)?;
    if let Some(bad) = kept.iter().find(|t| !candidate_types.contains(*t)) {
        return Err(ProviderError::Protocol(format!("filter_relations returned `{bad}`, which was not offered")));
    }
    Ok(kept)
}

/// Requests type weights and clamps every value into `[0, 1]`.
pub fn assign_type_weights(
    llm: &dyn LanguageModel,
    types: &BTreeSet<String>,
) -> Result<TypeWeightTable, ProviderError> {
    let mut table = llm.assign_type_weights(types)?;
    for (ty, w) in table.weights.iter_mut() {
        *w = clamp_weight(*w, ty);
    }
    table.default_weight = clamp_weight(table.default_weight, "<default>");
    Ok(table)
}

fn clamp_weight(w: f64, ty: &str) -> f64 {
    if w.is_nan() {
        log::warn!("type weight for `{ty}` is NaN; using 0");
        return 0.0;
    }
    if !(0.0..=1.0).contains(&w) {
        log::warn!("type weight {w} for `{ty}` outside [0, 1]; clamping");
    }
    w.clamp(0.0, 1.0)
}

/// Asks the backend whether two same-type entities share a hidden relation.
/// Proposals outside `vocabulary` are protocol violations.
pub fn judge_hidden_relation(
    llm: &dyn LanguageModel,
    pair: (&Entity, &Entity),
    ctx: &QueryContext,
    vocabulary: &[String],
) -> Result<Option<HiddenRelation>, ProviderError> {
    if pair.0.entity_type != pair.1.entity_type {
        return Err(ProviderError::InvalidInput(format!(
            "cannot judge `{}` ({}) against `{}` ({}): types differ",
            pair.0.id, pair.0.entity_type, pair.1.id, pair.1.entity_type
        )));
    }
    match llm.judge_hidden_relation(pair, ctx)? {
        Some(rel) if !vocabulary.contains(&rel.relation_type) => Err(ProviderError::Protocol(format!(
            "proposed relation type `{}` is not in the completion vocabulary",
            rel.relation_type
        ))),
        other => Ok(other),
    }
}

pub fn summarize_community(
    llm: &dyn LanguageModel,
    verbalization: &str,
    ctx: &QueryContext,
) -> Result<CommunitySummary, ProviderError> {
    if verbalization.trim().is_empty() {
        return Err(ProviderError::InvalidInput("empty community verbalization".into()));
    }
    llm.summarize_community(verbalization, ctx)
}

/// Synthesizes the final answer; with no community answers this returns
/// [`NO_EVIDENCE_ANSWER`] without contacting the backend.
pub fn synthesize_final(
    llm: &dyn LanguageModel,
    answers: &[CommunitySummary],
    ctx: &QueryContext,
) -> Result<String, ProviderError> {
    if answers.is_empty() {
        return Ok(NO_EVIDENCE_ANSWER.to_owned());
    }
    llm.synthesize_final(answers, ctx)
}

/// Embeds `texts`, checking count, uniform dimension and finiteness.
pub fn embed(embedder: &dyn Embedder, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
    if let Some(blank) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(ProviderError::InvalidInput(format!("text #{blank} to embed is blank")));
    }
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let vectors = embedder.embed(texts)?;
    if vectors.len() != texts.len() {
        return Err(ProviderError::Protocol(format!(
            "embed returned {} vectors for {} texts",
            vectors.len(),
            texts.len()
        )));
    }
    let dim = vectors[0].dim();
    if dim == 0 {
        return Err(ProviderError::Protocol("embed returned zero-dimensional vectors".into()));
    }
    for v in &vectors {
        if v.dim() != dim {
            return Err(ProviderError::DimensionDrift { expected: dim, got: v.dim() });
        }
        if v.values.iter().any(|x| !x.is_finite()) {
            return Err(ProviderError::Protocol("embed returned non-finite values".into()));
        }
    }
    Ok(vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scripted {
        kept_ids: Vec<Vec<String>>,
        kept_types: BTreeSet<String>,
        weights: TypeWeightTable,
        proposal: Option<HiddenRelation>,
    }

    impl LanguageModel for Scripted {
        fn name(&self) -> &str {
            "scripted"
        }
        fn extract_context(&self, query: &str) -> Result<QueryContext, ProviderError> {
            Ok(QueryContext { query: query.into(), keywords: vec!["  ".into()], target_types: vec![] })
        }
        fn filter_entities(
            &self,
            _: &QueryContext,
            _: &[KeywordCandidates],
        ) -> Result<Vec<Vec<String>>, ProviderError> {
            Ok(self.kept_ids.clone())
        }
        fn filter_relations(&self, _: &QueryContext, _: &BTreeSet<String>) -> Result<BTreeSet<String>, ProviderError> {
            Ok(self.kept_types.clone())
        }
        fn assign_type_weights(&self, _: &BTreeSet<String>) -> Result<TypeWeightTable, ProviderError> {
            Ok(self.weights.clone())
        }
        fn judge_hidden_relation(
            &self,
            _: (&Entity, &Entity),
            _: &QueryContext,
        ) -> Result<Option<HiddenRelation>, ProviderError> {
            Ok(self.proposal.clone())
        }
        fn summarize_community(&self, _: &str, _: &QueryContext) -> Result<CommunitySummary, ProviderError> {
            unreachable!()
        }
        fn synthesize_final(&self, _: &[CommunitySummary], _: &QueryContext) -> Result<String, ProviderError> {
            Ok("scripted".into())
        }
    }

    fn scripted() -> Scripted {
        Scripted {
            kept_ids: vec![],
            kept_types: BTreeSet::new(),
            weights: TypeWeightTable::uniform([], 1.0, 0.5),
            proposal: None,
        }
    }

    fn ctx() -> QueryContext {
        QueryContext { query: "q".into(), keywords: vec!["graph".into()], target_types: vec![] }
    }

    fn group(keyword: &str, ids: &[&str]) -> KeywordCandidates {
        KeywordCandidates {
            keyword: keyword.into(),
            candidates: ids
                .iter()
                .map(|id| ScoredEntity { entity: Entity::new(*id, *id, "Model"), score: 0.5 })
                .collect(),
        }
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn blank_keywords_are_an_empty_extraction() {
        assert!(matches!(extract_context(&scripted(), "anything"), Err(ProviderError::EmptyKeywords)));
        assert!(matches!(extract_context(&scripted(), "   "), Err(ProviderError::EmptyKeywords)));
    }

    #[test]
    fn unknown_entity_id_is_a_protocol_violation() {
        let llm = Scripted { kept_ids: vec![vec!["a".into(), "ghost".into()]], ..scripted() };
        let err = filter_entities(&llm, &ctx(), &[group("graph", &["a", "b"])]).unwrap_err();
        assert!(matches!(err, ProviderError::Protocol(_)));
    }

    #[test]
    fn entity_filter_keeps_input_order() {
        let llm = Scripted { kept_ids: vec![vec!["c".into(), "a".into()]], ..scripted() };
        let out = filter_entities(&llm, &ctx(), &[group("graph", &["a", "b", "c"])]).unwrap();
        let ids: Vec<&str> = out[0].candidates.iter().map(|c| c.entity.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "c"]);
    }

    #[test]
    fn empty_candidates_short_circuit() {
        let out = filter_entities(&scripted(), &ctx(), &[group("graph", &[])]).unwrap();
        assert!(out[0].candidates.is_empty());
    }

    #[test]
    fn relation_filter_subset_rule() {
        let offered = set(&["a", "b", "c", "d", "e"]);
        let llm = Scripted { kept_types: set(&["a", "c", "e"]), ..scripted() };
        assert_eq!(filter_relations(&llm, &ctx(), &offered).unwrap(), set(&["a", "c", "e"]));
        let llm = Scripted { kept_types: set(&["a", "zzz"]), ..scripted() };
        assert!(matches!(filter_relations(&llm, &ctx(), &offered), Err(ProviderError::Protocol(_))));
    }

    #[test]
    fn out_of_range_weights_clamp() {
        let mut weights = BTreeMap::new();
        weights.insert("cites".to_string(), 1.7);
        weights.insert("uses".to_string(), -0.2);
        let llm = Scripted { weights: TypeWeightTable { weights, default_weight: 0.5 }, ..scripted() };
        let table = assign_type_weights(&llm, &set(&["cites", "uses"])).unwrap();
        assert_eq!(table.weight("cites"), 1.0);
        assert_eq!(table.weight("uses"), 0.0);
        assert_eq!(table.weight("other"), 0.5);
    }

    #[test]
    fn judge_rejects_mixed_types_and_foreign_vocabulary() {
        let a = Entity::new("a", "graph net", "Model");
        let b = Entity::new("b", "graph set", "Dataset");
        let vocab: Vec<String> = COMPLETION_RELATION_TYPES.iter().map(|s| s.to_string()).collect();
        assert!(matches!(
            judge_hidden_relation(&scripted(), (&a, &b), &ctx(), &vocab),
            Err(ProviderError::InvalidInput(_))
        ));
        let c = Entity::new("c", "graph model", "Model");
        let llm = Scripted {
            proposal: Some(HiddenRelation { relation_type: "enemy_of".into(), description: String::new() }),
            ..scripted()
        };
        assert!(matches!(judge_hidden_relation(&llm, (&a, &c), &ctx(), &vocab), Err(ProviderError::Protocol(_))));
    }

    #[test]
    fn synthesis_without_answers_is_no_evidence() {
        assert_eq!(synthesize_final(&scripted(), &[], &ctx()).unwrap(), NO_EVIDENCE_ANSWER);
    }

    #[test]
    fn cosine_of_zero_vector_is_zero() {
        let z = EmbeddingVector { values: vec![0.0, 0.0] };
        let u = EmbeddingVector { values: vec![1.0, 0.0] };
        assert_eq!(z.cosine(&u), 0.0);
        assert!((u.cosine(&u) - 1.0).abs() < 1e-15);
    }
}
