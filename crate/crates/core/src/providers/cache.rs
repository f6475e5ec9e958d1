//! Response caching for the retrieval-side operations.
//!
//! Context extraction, both filters and type weights are cached on disk,
//! one JSON file per request named by the SHA-256 of (provider, operation,
//! canonical input). Type weights are additionally memoized per relation
//! type in memory, so a type is only ever asked about once per provider.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{
    CommunitySummary, HiddenRelation, KeywordCandidates, LanguageModel, ProviderError, QueryContext, TypeWeightTable,
};
use crate::kg_store::Entity;

pub struct CachedLanguageModel<L> {
    inner: L,
    dir: Option<PathBuf>,
    write_lock: Mutex<()>,
    weights: Mutex<WeightMemo>,
}

#[derive(Default)]
struct WeightMemo {
    by_type: HashMap<String, f64>,
    default_weight: Option<f64>,
}

impl<L: LanguageModel> CachedLanguageModel<L> {
    /// In-memory type-weight memo only.
    pub fn in_memory(inner: L) -> Self {
        Self { inner, dir: None, write_lock: Mutex::new(()), weights: Mutex::default() }
    }

    /// Memo plus an on-disk response cache under `dir` (created if needed).
    pub fn on_disk(inner: L, dir: impl Into<PathBuf>) -> Result<Self, ProviderError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| ProviderError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(Self { inner, dir: Some(dir), write_lock: Mutex::new(()), weights: Mutex::default() })
    }

    pub fn inner(&self) -> &L {
        &self.inner
    }

    pub fn cache_dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn cached<I, O, F>(&self, op: &str, input: &I, compute: F) -> Result<O, ProviderError>
    where
        I: Serialize,
        O: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<O, ProviderError>,
    {
        let Some(dir) = &self.dir else { return compute() };
        let canonical = serde_json::to_string(input).map_err(|e| ProviderError::Cache(e.to_string()))?;
        let mut hasher = Sha256::new();
        hasher.update(self.inner.name().as_bytes());
        hasher.update([0u8]);
        hasher.update(op.as_bytes());
        hasher.update([0u8]);
        hasher.update(canonical.as_bytes());
        let path = dir.join(format!("{}.json", hex::encode(hasher.finalize())));

        if let Ok(text) = fs::read_to_string(&path) {
            match serde_json::from_str(&text) {
                Ok(hit) => return Ok(hit),
                Err(e) => log::warn!("ignoring unreadable cache entry {}: {e}", path.display()),
            }
        }
        let value = compute()?;
        let text = serde_json::to_string(&value).map_err(|e| ProviderError::Cache(e.to_string()))?;
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, text)
            .and_then(|_| fs::rename(&tmp, &path))
            .map_err(|e| ProviderError::Cache(format!("{}: {e}", path.display())))?;
        Ok(value)
    }
}

impl<L: LanguageModel> LanguageModel for CachedLanguageModel<L> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn extract_context(&self, query: &str) -> Result<QueryContext, ProviderError> {
        self.cached("extract", &query, || self.inner.extract_context(query))
    }

    fn filter_entities(
        &self,
        ctx: &QueryContext,
        groups: &[KeywordCandidates],
    ) -> Result<Vec<Vec<String>>, ProviderError> {
        self.cached("filter_entities", &(ctx, groups), || self.inner.filter_entities(ctx, groups))
    }

    fn filter_relations(
        &self,
        ctx: &QueryContext,
        candidate_types: &BTreeSet<String>,
    ) -> Result<BTreeSet<String>, ProviderError> {
        self.cached("filter_relations", &(ctx, candidate_types), || self.inner.filter_relations(ctx, candidate_types))
    }

    fn assign_type_weights(&self, types: &BTreeSet<String>) -> Result<TypeWeightTable, ProviderError> {
        let missing: BTreeSet<String> = {
            let memo = self.weights.lock().unwrap_or_else(|p| p.into_inner());
            let mut missing: BTreeSet<String> =
                types.iter().filter(|t| !memo.by_type.contains_key(*t)).cloned().collect();
            if missing.is_empty() && memo.default_weight.is_none() {
                // still need a default from the backend
                missing = types.clone();
            }
            missing
        };
        if !missing.is_empty() || types.is_empty() {
            let fetched = self.cached("type_weights", &missing, || self.inner.assign_type_weights(&missing))?;
            let mut memo = self.weights.lock().unwrap_or_else(|p| p.into_inner());
            for (t, w) in fetched.weights {
                memo.by_type.entry(t).or_insert(w);
            }
            memo.default_weight.get_or_insert(fetched.default_weight);
        }
        let memo = self.weights.lock().unwrap_or_else(|p| p.into_inner());
        let default_weight = memo.default_weight.unwrap_or(0.5);
        Ok(TypeWeightTable {
            weights: types.iter().filter_map(|t| memo.by_type.get(t).map(|&w| (t.clone(), w))).collect(),
            default_weight,
        })
    }

    fn judge_hidden_relation(
        &self,
        pair: (&Entity, &Entity),
        ctx: &QueryContext,
    ) -> Result<Option<HiddenRelation>, ProviderError> {
        self.inner.judge_hidden_relation(pair, ctx)
    }

    fn summarize_community(&self, verbalization: &str, ctx: &QueryContext) -> Result<CommunitySummary, ProviderError> {
        self.inner.summarize_community(verbalization, ctx)
    }

    fn synthesize_final(&self, answers: &[CommunitySummary], ctx: &QueryContext) -> Result<String, ProviderError> {
        self.inner.synthesize_final(answers, ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::MockLanguageModel;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting {
        inner: MockLanguageModel,
        extract_calls: AtomicUsize,
        weight_requests: Mutex<Vec<BTreeSet<String>>>,
    }

    impl LanguageModel for Counting {
        fn name(&self) -> &str {
            "counting"
        }
        fn extract_context(&self, query: &str) -> Result<QueryContext, ProviderError> {
            self.extract_calls.fetch_add(1, Ordering::SeqCst);
            self.inner.extract_context(query)
        }
        fn filter_entities(
            &self,
            c: &QueryContext,
            g: &[KeywordCandidates],
        ) -> Result<Vec<Vec<String>>, ProviderError> {
            self.inner.filter_entities(c, g)
        }
        fn filter_relations(&self, c: &QueryContext, t: &BTreeSet<String>) -> Result<BTreeSet<String>, ProviderError> {
            self.inner.filter_relations(c, t)
        }
        fn assign_type_weights(&self, types: &BTreeSet<String>) -> Result<TypeWeightTable, ProviderError> {
            self.weight_requests.lock().unwrap().push(types.clone());
            self.inner.assign_type_weights(types)
        }
        fn judge_hidden_relation(
            &self,
            p: (&Entity, &Entity),
            c: &QueryContext,
        ) -> Result<Option<HiddenRelation>, ProviderError> {
            self.inner.judge_hidden_relation(p, c)
        }
        fn summarize_community(&self, v: &str, c: &QueryContext) -> Result<CommunitySummary, ProviderError> {
            self.inner.summarize_community(v, c)
        }
        fn synthesize_final(&self, a: &[CommunitySummary], c: &QueryContext) -> Result<String, ProviderError> {
            self.inner.synthesize_final(a, c)
        }
    }

    fn counting() -> Counting {
        Counting {
            inner: MockLanguageModel::new(vec!["Model".into()]),
            extract_calls: AtomicUsize::new(0),
            weight_requests: Mutex::new(Vec::new()),
        }
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn disk_cache_survives_a_new_wrapper() {
        let dir = tempfile::tempdir().unwrap();
        let first = CachedLanguageModel::on_disk(counting(), dir.path()).unwrap();
        let a = first.extract_context("graph attention models").unwrap();
        let b = first.extract_context("graph attention models").unwrap();
        assert_eq!(a, b);
        assert_eq!(first.inner().extract_calls.load(Ordering::SeqCst), 1);

        let second = CachedLanguageModel::on_disk(counting(), dir.path()).unwrap();
        assert_eq!(second.extract_context("graph attention models").unwrap(), a);
        assert_eq!(second.inner().extract_calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn type_weights_only_requested_once_per_type() {
        let cached = CachedLanguageModel::in_memory(counting());
        let t1 = cached.assign_type_weights(&set(&["cites", "uses"])).unwrap();
        let t2 = cached.assign_type_weights(&set(&["uses", "extends"])).unwrap();
        assert_eq!(t1.weight("cites"), 1.0);
        assert_eq!(t2.weight("extends"), 1.0);
        assert_eq!(t2.default_weight, 0.5);
        let requests = cached.inner().weight_requests.lock().unwrap().clone();
        assert_eq!(requests, vec![set(&["cites", "uses"]), set(&["extends"])]);
        cached.assign_type_weights(&set(&["cites"])).unwrap();
        assert_eq!(cached.inner().weight_requests.lock().unwrap().len(), 2);
    }
}
