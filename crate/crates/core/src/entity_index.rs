//! TF-IDF index over entity surface text (name, aliases, description) used
//! to find the entities a query keyword refers to.
//!
//! Scoring is cosine similarity between tf·idf vectors with raw term counts
//! and `idf = ln(1 + N / df)`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::kg_store::{Entity, KnowledgeGraph};
use crate::text::tokenize;

pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posting {
    /// Position of the entity in the graph's id-sorted entity list.
    pub doc: usize,
    pub tf: u32,
}

#[derive(Debug, Clone)]
pub struct EntityIndex {
    doc_ids: Vec<String>,
    postings: BTreeMap<String, Vec<Posting>>,
    doc_norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntity {
    pub entity: Entity,
    pub score: f64,
}

/// The text an entity is indexed under.
pub fn entity_document(entity: &Entity) -> String {
    let mut doc = entity.name.clone();
    for alias in &entity.aliases {
        doc.push(' ');
        doc.push_str(alias);
    }
    if let Some(desc) = &entity.description {
        doc.push(' ');
        doc.push_str(desc);
    }
    doc
}

fn term_counts(text: &str) -> BTreeMap<String, u32> {
    let mut counts = BTreeMap::new();
    for tok in tokenize(text) {
        *counts.entry(tok).or_insert(0) += 1;
    }
    counts
}

impl EntityIndex {
    pub fn build(graph: &KnowledgeGraph) -> Self {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_ids = Vec::with_capacity(graph.entity_count());
        for (doc, entity) in graph.entities().iter().enumerate() {
            doc_ids.push(entity.id.clone());
            for (term, tf) in term_counts(&entity_document(entity)) {
                postings.entry(term).or_default().push(Posting { doc, tf });
            }
        }
        let corpus = doc_ids.len();
        let mut sq = vec![0.0f64; corpus];
        for list in postings.values() {
            let idf = idf(corpus, list.len());
            for p in list {
                let w = p.tf as f64 * idf;
                sq[p.doc] += w * w;
            }
        }
        let doc_norms = sq.into_iter().map(f64::sqrt).collect();
        Self { doc_ids, postings, doc_norms }
    }

    pub fn corpus_size(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    /// Document frequency of `term`, 0 if absent.
    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = (&str, usize)> {
        self.postings.iter().map(|(t, p)| (t.as_str(), p.len()))
    }

    /// Up to `k` entities ranked by descending cosine score against
    /// `keyword`; scores within 1e-12 tie and are broken by ascending id,
    /// zero scores are dropped.
    pub fn top_k(&self, graph: &KnowledgeGraph, keyword: &str, k: usize) -> Vec<ScoredEntity> {
        let query = term_counts(keyword);
        let n = self.corpus_size();
        let mut qnorm_sq = 0.0;
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for (term, qtf) in &query {
            let Some(list) = self.postings.get(term) else { continue };
            let idf = idf(n, list.len());
            let qw = *qtf as f64 * idf;
            qnorm_sq += qw * qw;
            for p in list {
                *acc.entry(p.doc).or_insert(0.0) += qw * p.tf as f64 * idf;
            }
        }
        if qnorm_sq == 0.0 {
            return Vec::new();
        }
        let qnorm = qnorm_sq.sqrt();
        let mut scored: Vec<(usize, f64)> = acc
            .into_iter()
            .filter(|&(doc, _)| self.doc_norms[doc] > 0.0)
            .map(|(doc, dot)| (doc, dot / (qnorm * self.doc_norms[doc])))
            .filter(|&(_, s)| s > 0.0)
            .collect();
        // scores are compared at 1e-12 resolution so that mathematically equal
        // scores tie despite summation-order noise; doc positions follow id
        // order, so ascending position is ascending id
        scored.sort_by_key(|&(doc, s)| (std::cmp::Reverse((s * TIE_RESOLUTION).round() as i64), doc));
        scored.truncate(k);
        scored
            .into_iter()
            .map(|(doc, score)| ScoredEntity {
                entity: graph.entity(&self.doc_ids[doc]).expect("index built from this graph").clone(),
                score,
            })
            .collect()
    }
}

const TIE_RESOLUTION: f64 = 1e12;

fn idf(corpus: usize, df: usize) -> f64 {
    (1.0 + corpus as f64 / df as f64).ln()
}
