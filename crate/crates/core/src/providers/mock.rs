//! Deterministic offline backends. Every output is a pure function of the
//! inputs, so pipeline runs against the mocks are byte-reproducible.

use std::collections::BTreeSet;

use super::{
    CommunitySummary, Embedder, EmbeddingVector, HiddenRelation, KeywordCandidates, LanguageModel, ProviderError,
    QueryContext, TypeWeightTable,
};
use crate::kg_store::Entity;
use crate::text::{distinct_tokens, shared_tokens};

pub const MOCK_EMBEDDING_DIM: usize = 32;

/// Minimum token length for a query token to become a mock keyword.
const MOCK_KEYWORD_MIN_LEN: usize = 4;
/// Relation lines copied into a mock community answer.
const MOCK_ANSWER_LINES: usize = 5;

#[derive(Debug, Clone)]
pub struct MockLanguageModel {
    target_types: Vec<String>,
    default_weight: f64,
}

impl MockLanguageModel {
    pub fn new(target_types: Vec<String>) -> Self {
        Self { target_types, default_weight: 0.5 }
    }

    pub fn with_default_weight(mut self, default_weight: f64) -> Self {
        self.default_weight = default_weight;
        self
    }
}

impl LanguageModel for MockLanguageModel {
    fn name(&self) -> &str {
        "mock"
    }

    /// Keywords are the distinct query tokens of length at least four.
    fn extract_context(&self, query: &str) -> Result<QueryContext, ProviderError> {
        let keywords: Vec<String> =
            distinct_tokens(query).into_iter().filter(|t| t.chars().count() >= MOCK_KEYWORD_MIN_LEN).collect();
        if keywords.is_empty() {
            return Err(ProviderError::EmptyKeywords);
        }
        Ok(QueryContext { query: query.to_owned(), keywords, target_types: self.target_types.clone() })
    }

    /// Keeps candidates whose name shares at least one token with the keyword.
    fn filter_entities(
        &self,
        _ctx: &QueryContext,
        groups: &[KeywordCandidates],
    ) -> Result<Vec<Vec<String>>, ProviderError> {
        Ok(groups
            .iter()
            .map(|g| {
                g.candidates
                    .iter()
                    .filter(|c| !shared_tokens(&c.entity.name, &g.keyword).is_empty())
                    .map(|c| c.entity.id.clone())
                    .collect()
            })
            .collect())
    }

    fn filter_relations(
        &self,
        _ctx: &QueryContext,
        candidate_types: &BTreeSet<String>,
    ) -> Result<BTreeSet<String>, ProviderError> {
        Ok(candidate_types.clone())
    }

    fn assign_type_weights(&self, types: &BTreeSet<String>) -> Result<TypeWeightTable, ProviderError> {
        Ok(TypeWeightTable::uniform(types.iter().cloned(), 1.0, self.default_weight))
    }

    /// Proposes `similar_to` when the two names share two or more tokens.
    fn judge_hidden_relation(
        &self,
        pair: (&Entity, &Entity),
        _ctx: &QueryContext,
    ) -> Result<Option<HiddenRelation>, ProviderError> {
        let shared = shared_tokens(&pair.0.name, &pair.1.name);
        if shared.len() < 2 {
            return Ok(None);
        }
        Ok(Some(HiddenRelation {
            relation_type: "similar_to".to_owned(),
            description: format!("{} and {} share the terms {}", pair.0.name, pair.1.name, shared.join(", ")),
        }))
    }

    /// Theme is the header line; the answer joins the first five relation lines.
    fn summarize_community(&self, verbalization: &str, _ctx: &QueryContext) -> Result<CommunitySummary, ProviderError> {
        let mut lines = verbalization.lines();
        let theme = lines.next().unwrap_or_default().to_owned();
        let answer = lines.take(MOCK_ANSWER_LINES).collect::<Vec<_>>().join("; ");
        Ok(CommunitySummary { theme, answer })
    }

    fn synthesize_final(&self, answers: &[CommunitySummary], _ctx: &QueryContext) -> Result<String, ProviderError> {
        Ok(answers
            .iter()
            .enumerate()
            .map(|(i, a)| format!("[{}] {}\n{}", i + 1, a.theme, a.answer))
            .collect::<Vec<_>>()
            .join("\n\n"))
    }
}

#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dim: usize,
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self::new(MOCK_EMBEDDING_DIM)
    }
}

impl Embedder for MockEmbedder {
    fn name(&self) -> &str {
        "mock"
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        Ok(texts.iter().map(|t| mock_embedding(t, self.dim)).collect())
    }
}

/// Hash-based pseudo embedding: coordinate `i` is a hash of `(text, i)`
/// mapped to `[-1, 1]`, and the vector is L2-normalized.
///
/// The hash is 64-bit FNV-1a over the UTF-8 bytes of `text`, a `0xFF`
/// separator byte and `i` as four little-endian bytes, passed through the
/// SplitMix64 finalizer. The top 53 bits become the coordinate.
pub fn mock_embedding(text: &str, dim: usize) -> EmbeddingVector {
    let mut values: Vec<f64> = (0..dim as u32).map(|i| coordinate(text, i)).collect();
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    EmbeddingVector { values }
}

fn coordinate(text: &str, index: u32) -> f64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET;
    for b in text.bytes().chain(std::iter::once(0xff)).chain(index.to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity_index::ScoredEntity;

    fn ctx() -> QueryContext {
        QueryContext { query: String::new(), keywords: vec![], target_types: vec![] }
    }

    #[test]
    fn keywords_are_long_distinct_tokens() {
        let llm = MockLanguageModel::new(vec!["Model".into(), "Dataset".into()]);
        let ctx = llm.extract_context("compare attention mechanisms across datasets").unwrap();
        assert_eq!(ctx.keywords, vec!["compare", "attention", "mechanisms", "across", "datasets"]);
        assert_eq!(ctx.target_types, vec!["Model", "Dataset"]);
        assert!(matches!(llm.extract_context("a b c"), Err(ProviderError::EmptyKeywords)));
    }

    #[test]
    fn entity_filter_keeps_token_overlap() {
        let llm = MockLanguageModel::new(vec![]);
        let group = KeywordCandidates {
            keyword: "attention".into(),
            candidates: vec![
                ScoredEntity { entity: Entity::new("a", "Graph Attention Network", "Model"), score: 0.9 },
                ScoredEntity { entity: Entity::new("b", "Cora", "Dataset"), score: 0.1 },
            ],
        };
        assert_eq!(llm.filter_entities(&ctx(), &[group]).unwrap(), vec![vec!["a".to_string()]]);
    }

    #[test]
    fn uniform_type_weights() {
        let llm = MockLanguageModel::new(vec![]);
        let types: BTreeSet<String> = ["cites".to_string(), "uses".to_string()].into();
        let table = llm.assign_type_weights(&types).unwrap();
        assert_eq!(table.weight("cites"), 1.0);
        assert_eq!(table.weight("uses"), 1.0);
        assert_eq!(table.weight("other"), 0.5);
        assert_eq!(llm.filter_relations(&ctx(), &types).unwrap(), types);
    }

    #[test]
    fn judge_needs_two_shared_tokens() {
        let llm = MockLanguageModel::new(vec![]);
        let a = Entity::new("a", "graph attention network", "Model");
        let b = Entity::new("b", "graph attention model", "Model");
        let c = Entity::new("c", "sparse retriever", "Model");
        let rel = llm.judge_hidden_relation((&a, &b), &ctx()).unwrap().unwrap();
        assert_eq!(rel.relation_type, "similar_to");
        assert!(llm.judge_hidden_relation((&a, &c), &ctx()).unwrap().is_none());
    }

    #[test]
    fn summaries_follow_line_rule() {
        let llm = MockLanguageModel::new(vec![]);
        let one = llm.summarize_community("header", &ctx()).unwrap();
        assert_eq!(one, CommunitySummary { theme: "header".into(), answer: String::new() });

        let five: String =
            std::iter::once("h".to_string()).chain((1..=5).map(|i| format!("l{i}"))).collect::<Vec<_>>().join("\n");
        assert_eq!(llm.summarize_community(&five, &ctx()).unwrap().answer, "l1; l2; l3; l4; l5");

        let twenty: String =
            std::iter::once("h".to_string()).chain((1..=20).map(|i| format!("l{i}"))).collect::<Vec<_>>().join("\n");
        let s = llm.summarize_community(&twenty, &ctx()).unwrap();
        assert_eq!(s.theme, "h");
        assert_eq!(s.answer, "l1; l2; l3; l4; l5");
    }

    #[test]
    fn synthesis_concatenates_in_order() {
        let llm = MockLanguageModel::new(vec![]);
        let a = CommunitySummary { theme: "A".into(), answer: "x".into() };
        let b = CommunitySummary { theme: "B".into(), answer: "y".into() };
        let c = CommunitySummary { theme: "C".into(), answer: "z".into() };
        assert_eq!(llm.synthesize_final(std::slice::from_ref(&a), &ctx()).unwrap(), "[1] A\nx");
        assert_eq!(llm.synthesize_final(&[a.clone(), b.clone()], &ctx()).unwrap(), "[1] A\nx\n\n[2] B\ny");
        assert_eq!(llm.synthesize_final(&[a, b, c], &ctx()).unwrap(), "[1] A\nx\n\n[2] B\ny\n\n[3] C\nz");
    }

    #[test]
    fn embeddings_are_deterministic_unit_vectors() {
        let e = MockEmbedder::default();
        let texts = vec!["graph attention".to_string(), "graph attention".to_string(), "other".to_string()];
        let v = e.embed(&texts).unwrap();
        assert_eq!(v[0], v[1]);
        assert_ne!(v[0], v[2]);
        for vec in &v {
            assert_eq!(vec.dim(), MOCK_EMBEDDING_DIM);
            assert!((vec.norm() - 1.0).abs() < 1e-9);
        }
    }
}
