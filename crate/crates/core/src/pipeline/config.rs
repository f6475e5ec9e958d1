//! Run configuration. Every threshold and cap the pipeline uses lives here;
//! a TOML file may override any subset of the defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::community::DEFAULT_MAX_COMMUNITIES;
use crate::entity_index::DEFAULT_TOP_K;
use crate::kg_store::DEFAULT_TITLE_TYPE;
use crate::optimization::{CompletionConfig, KeywordAggregation, PruneRamp};
use crate::providers::MOCK_EMBEDDING_DIM;
use crate::retrieval::{DEFAULT_MAX_HOPS, DEFAULT_MAX_PATHS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub title_type: String,
    pub top_k: usize,
    pub max_hops: usize,
    pub max_paths: usize,
    pub max_communities: usize,
    pub keyword_aggregation: KeywordAggregation,
    pub prune: PruneRamp,
    /// Replaces the adaptive pruning threshold when set.
    pub fixed_prune_threshold: Option<f64>,
    pub completion: CompletionConfig,
    /// Wall-clock fields are left empty when false, so reports are
    /// byte-reproducible.
    pub record_timings: bool,
    pub mock: MockSettings,
    pub remote: RemoteSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            title_type: DEFAULT_TITLE_TYPE.to_owned(),
            top_k: DEFAULT_TOP_K,
            max_hops: DEFAULT_MAX_HOPS,
            max_paths: DEFAULT_MAX_PATHS,
            max_communities: DEFAULT_MAX_COMMUNITIES,
            keyword_aggregation: KeywordAggregation::Max,
            prune: PruneRamp::default(),
            fixed_prune_threshold: None,
            completion: CompletionConfig::default(),
            record_timings: true,
            mock: MockSettings::default(),
            remote: RemoteSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSettings {
    /// Target entity types the mock language model reports for every query.
    pub target_types: Vec<String>,
    pub default_type_weight: f64,
    pub embedding_dim: usize,
}

impl Default for MockSettings {
    fn default() -> Self {
        Self {
            target_types: vec!["Model".into(), "Dataset".into(), "Task".into()],
            default_type_weight: 0.5,
            embedding_dim: MOCK_EMBEDDING_DIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteSettings {
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    pub default_type_weight: f64,
    /// Directory for cached extraction, filtering and weight responses.
    pub cache_dir: Option<PathBuf>,
    /// TOML file overriding the prompt templates.
    pub prompts: Option<PathBuf>,
}

impl Default for RemoteSettings {
    fn default() -> Self {
        Self { max_in_flight: 4, timeout_secs: 120, default_type_weight: 0.5, cache_dir: None, prompts: None }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.title_type.trim().is_empty() {
            return Err("title_type must not be blank".into());
        }
        if self.top_k == 0 {
            return Err("top_k must be at least 1".into());
        }
        if self.max_hops == 0 || self.max_paths == 0 {
            return Err("max_hops and max_paths must be at least 1".into());
        }
        if self.max_communities == 0 {
            return Err("max_communities must be at least 1".into());
        }
        let ramp = &self.prune;
        if !(0.0..=1.0).contains(&ramp.min_quantile)
            || !(0.0..=1.0).contains(&ramp.max_quantile)
            || ramp.min_quantile > ramp.max_quantile
        {
            return Err("prune quantiles must satisfy 0 <= min_quantile <= max_quantile <= 1".into());
        }
        if ramp.full_ramp_edges == 0 {
            return Err("prune.full_ramp_edges must be at least 1".into());
        }
        if self.fixed_prune_threshold.is_some_and(|t| !t.is_finite()) {
            return Err("fixed_prune_threshold must be finite".into());
        }
        if self.completion.relation_vocabulary.is_empty() {
            return Err("completion.relation_vocabulary must not be empty".into());
        }
        if !self.completion.iqr_factor.is_finite() || self.completion.iqr_factor < 0.0 {
            return Err("completion.iqr_factor must be a non-negative number".into());
        }
        if self.mock.embedding_dim == 0 {
            return Err("mock.embedding_dim must be at least 1".into());
        }
        if self.remote.max_in_flight == 0 {
            return Err("remote.max_in_flight must be at least 1".into());
        }
        Ok(())
    }
}
