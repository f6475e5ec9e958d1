//! Question answering over an academic knowledge graph.
//!
//! A query is turned into keywords and target entity types, matched against
//! entities by TF-IDF, and expanded into a title-anchored subgraph of
//! bounded paths and paper neighborhoods. The subgraph is weighted by
//! keyword relevance, pruned, completed with implicit same-type relations,
//! and split into a few paper communities whose summaries are combined into
//! the final answer.
//!
//! [`pipeline::answer`] runs everything; the stage modules can be used on
//! their own.

pub mod community;
pub mod entity_index;
pub mod kg_store;
pub mod optimization;
pub mod pipeline;
pub mod providers;
pub mod retrieval;
pub mod stats;
pub mod text;

pub use community::{CommunityPartition, DEFAULT_MAX_COMMUNITIES};
pub use entity_index::{EntityIndex, ScoredEntity};
pub use kg_store::{load_graph, Entity, GraphError, KnowledgeGraph, LoadStats, Provenance, Relation};
pub use optimization::{WeightedEdge, WeightedSubgraph};
pub use pipeline::{answer, PipelineConfig, PipelineError, Providers, RunReport};
pub use providers::{Embedder, LanguageModel, QueryContext};
pub use retrieval::{Path, Subgraph};
