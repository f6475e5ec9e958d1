//! Knowledge-graph storage: JSONL loading, validation and the adjacency and
//! type indexes every downstream stage reads from.
//!
//! Relations keep the direction they were authored with, but every query in
//! this module (and everything built on it) treats connectivity as
//! undirected.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TITLE_TYPE: &str = "Title";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub name: String,
    pub entity_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub aliases: Vec<String>,
}

impl Entity {
    pub fn new(id: impl Into<String>, name: impl Into<String>, entity_type: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            entity_type: entity_type.into(),
            description: None,
            aliases: Vec::new(),
        }
    }
}

/// Where an edge came from: the source file, or the completion stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    Completed,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Original => "original",
            Provenance::Completed => "completed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub source: String,
    pub target: String,
    pub relation_type: String,
    pub provenance: Provenance,
}

impl Relation {
    pub fn new(source: impl Into<String>, target: impl Into<String>, relation_type: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            relation_type: relation_type.into(),
            provenance: Provenance::Original,
        }
    }

    pub fn touches(&self, id: &str) -> bool {
        self.source == id || self.target == id
    }

    /// The endpoint opposite `id`. Assumes `id` is one of the endpoints.
    pub fn other_end(&self, id: &str) -> &str {
        if self.source == id {
            &self.target
        } else {
            &self.source
        }
    }

    /// True if the edge joins `a` and `b` in either direction.
    pub fn joins(&self, a: &str, b: &str) -> bool {
        (self.source == a && self.target == b) || (self.source == b && self.target == a)
    }
}

impl std::fmt::Display for Relation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} -[{}]-> {}", self.source, self.relation_type, self.target)
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("cannot read graph file {path}: {error}")]
    Io { path: PathBuf, error: std::io::Error },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: entity id must be non-empty")]
    EmptyId { line: usize },
    #[error("line {line}: duplicate entity id `{id}`")]
    DuplicateEntity { line: usize, id: String },
    #[error("line {line}: relation {edge} references unknown entity `{missing}`")]
    DanglingEndpoint { line: usize, edge: String, missing: String },
    #[error("unknown entity id `{0}`")]
    UnknownEntity(String),
}

/// Counts of input records the loader discarded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    pub self_loops_dropped: usize,
    pub duplicates_collapsed: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Entity {
        id: String,
        name: String,
        #[serde(rename = "type")]
        entity_type: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        description: Option<String>,
        #[serde(default)]
        aliases: Vec<String>,
    },
    Relation {
        source: String,
        target: String,
        #[serde(rename = "type")]
        relation_type: String,
    },
}

/// An immutable, indexed knowledge graph.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    /// Sorted by id.
    entities: Vec<Entity>,
    positions: HashMap<String, usize>,
    /// Sorted by (source, target, relation_type).
    relations: Vec<Relation>,
    /// Per entity position: incident relation indices, ordered by
    /// (neighbor id, relation type, relation index).
    adjacency: Vec<Vec<usize>>,
    type_index: BTreeMap<String, Vec<usize>>,
    relation_types: BTreeSet<String>,
    title_type: String,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities && self.relations == other.relations && self.title_type == other.title_type
    }
}

/// Loads a JSONL graph file, treating entities of type `Title` as paper titles.
pub fn load_graph(path: impl AsRef<Path>) -> Result<(KnowledgeGraph, LoadStats), GraphError> {
    load_graph_with_title_type(path, DEFAULT_TITLE_TYPE)
}

pub fn load_graph_with_title_type(
    path: impl AsRef<Path>,
    title_type: &str,
) -> Result<(KnowledgeGraph, LoadStats), GraphError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|error| GraphError::Io { path: path.to_path_buf(), error })?;
    KnowledgeGraph::parse_jsonl(&text, title_type)
}

impl KnowledgeGraph {
    /// Parses JSONL text. Lines may interleave entities and relations;
    /// endpoints are resolved only after every line has been read.
    pub fn parse_jsonl(text: &str, title_type: &str) -> Result<(Self, LoadStats), GraphError> {
        let mut entities = Vec::new();
        let mut relations = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let record: Record =
                serde_json::from_str(raw).map_err(|e| GraphError::Malformed { line, message: e.to_string() })?;
            match record {
                Record::Entity { id, name, entity_type, description, aliases } => {
                    entities.push((line, Entity { id, name, entity_type, description, aliases }))
                }
                Record::Relation { source, target, relation_type } => {
                    relations.push((line, Relation::new(source, target, relation_type)))
                }
            }
        }
        Self::build(entities, relations, title_type)
    }

    /// Builds a graph from in-memory records. Error line numbers refer to the
    /// 1-based position of the offending record in its input list.
    pub fn from_parts(
        entities: Vec<Entity>,
        relations: Vec<Relation>,
        title_type: &str,
    ) -> Result<(Self, LoadStats), GraphError> {
        Self::build(
            entities.into_iter().enumerate().map(|(i, e)| (i + 1, e)).collect(),
            relations
                .into_iter()
                .enumerate()
                .map(|(i, mut r)| {
                    r.provenance = Provenance::Original;
                    (i + 1, r)
                })
                .collect(),
            title_type,
        )
    }

    fn build(
        entity_records: Vec<(usize, Entity)>,
        relation_records: Vec<(usize, Relation)>,
        title_type: &str,
    ) -> Result<(Self, LoadStats), GraphError> {
        let mut by_id: BTreeMap<String, Entity> = BTreeMap::new();
        for (line, entity) in entity_records {
            if entity.id.is_empty() {
                return Err(GraphError::EmptyId { line });
            }
            if by_id.contains_key(&entity.id) {
                return Err(GraphError::DuplicateEntity { line, id: entity.id });
            }
            by_id.insert(entity.id.clone(), entity);
        }

        let mut stats = LoadStats::default();
        let mut edges = BTreeSet::new();
        for (line, relation) in relation_records {
            for endpoint in [&relation.source, &relation.target] {
                if !by_id.contains_key(endpoint) {
                    return Err(GraphError::DanglingEndpoint {
                        line,
                        edge: relation.to_string(),
                        missing: endpoint.clone(),
                    });
                }
            }
            if relation.source == relation.target {
                stats.self_loops_dropped += 1;
                log::warn!("line {line}: dropping self-loop {relation}");
                continue;
            }
            if !edges.insert(relation) {
                stats.duplicates_collapsed += 1;
            }
        }

        let entities: Vec<Entity> = by_id.into_values().collect();
        let relations: Vec<Relation> = edges.into_iter().collect();
        Ok((Self::index(entities, relations, title_type.to_owned()), stats))
    }

    fn index(entities: Vec<Entity>, relations: Vec<Relation>, title_type: String) -> Self {
        let positions: HashMap<String, usize> = entities.iter().enumerate().map(|(i, e)| (e.id.clone(), i)).collect();
        let mut adjacency = vec![Vec::new(); entities.len()];
        let mut relation_types = BTreeSet::new();
        for (ri, rel) in relations.iter().enumerate() {
            adjacency[positions[&rel.source]].push(ri);
            adjacency[positions[&rel.target]].push(ri);
            relation_types.insert(rel.relation_type.clone());
        }
        for (pos, list) in adjacency.iter_mut().enumerate() {
            let own = &entities[pos].id;
            list.sort_by(|&a, &b| {
                let (ra, rb) = (&relations[a], &relations[b]);
                (ra.other_end(own), &ra.relation_type, a).cmp(&(rb.other_end(own), &rb.relation_type, b))
            });
        }
        let mut type_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, e) in entities.iter().enumerate() {
            type_index.entry(e.entity_type.clone()).or_default().push(i);
        }
        Self { entities, positions, relations, adjacency, type_index, relation_types, title_type }
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    /// All entities, sorted by id.
    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    /// All relations, sorted by (source, target, relation type).
    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.positions.get(id).map(|&i| &self.entities[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.positions.contains_key(id)
    }

    pub fn title_type(&self) -> &str {
        &self.title_type
    }

    pub fn is_title(&self, id: &str) -> bool {
        self.entity(id).is_some_and(|e| e.entity_type == self.title_type)
    }

    /// Declared entity types, i.e. every type that occurs on some entity.
    pub fn entity_types(&self) -> impl Iterator<Item = &str> {
        self.type_index.keys().map(String::as_str)
    }

    pub fn has_entity_type(&self, entity_type: &str) -> bool {
        self.type_index.contains_key(entity_type)
    }

    pub fn relation_types(&self) -> &BTreeSet<String> {
        &self.relation_types
    }

    /// Incident edges of `id` in either direction whose type passes
    /// `relation_filter`, paired with the opposite endpoint. Sorted by
    /// neighbor id, then relation type.
    pub fn neighbors(
        &self,
        id: &str,
        relation_filter: Option<&BTreeSet<String>>,
    ) -> Result<Vec<(&Relation, &Entity)>, GraphError> {
        let &pos = self.positions.get(id).ok_or_else(|| GraphError::UnknownEntity(id.to_owned()))?;
        Ok(self.adjacency[pos]
            .iter()
            .map(|&ri| &self.relations[ri])
            .filter(|rel| relation_filter.is_none_or(|allowed| allowed.contains(&rel.relation_type)))
            .map(|rel| (rel, &self.entities[self.positions[rel.other_end(id)]]))
            .collect())
    }

    /// Number of incident edges, all relation types.
    pub fn degree(&self, id: &str) -> usize {
        self.positions.get(id).map_or(0, |&pos| self.adjacency[pos].len())
    }

    /// Entities with the given type, sorted by id. Unknown types yield an
    /// empty list.
    pub fn entities_of_type(&self, entity_type: &str) -> Vec<&Entity> {
        self.type_index
            .get(entity_type)
            .map(|list| list.iter().map(|&i| &self.entities[i]).collect())
            .unwrap_or_default()
    }

    /// Serializes to the JSONL interchange format: entities first, then
    /// relations, both in sorted order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entities {
            let record = Record::Entity {
                id: e.id.clone(),
                name: e.name.clone(),
                entity_type: e.entity_type.clone(),
                description: e.description.clone(),
                aliases: e.aliases.clone(),
            };
            out.push_str(&serde_json::to_string(&record).expect("entity record serializes"));
            out.push('\n');
        }
        for r in &self.relations {
            let record = Record::Relation {
                source: r.source.clone(),
                target: r.target.clone(),
                relation_type: r.relation_type.clone(),
            };
            out.push_str(&serde_json::to_string(&record).expect("relation record serializes"));
            out.push('\n');
        }
        out
    }
}
