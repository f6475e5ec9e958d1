//! Relevance-subgraph retrieval: cross-keyword entity pairs, bounded simple
//! paths between them, and the title-anchored neighborhoods of the relevant
//! entities.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::kg_store::{GraphError, KnowledgeGraph, Relation};

pub const DEFAULT_MAX_HOPS: usize = 5;
pub const DEFAULT_MAX_PATHS: usize = 10;

/// A simple path `e_a, r_1, e_1, ..., r_k, e_b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<String>,
    pub edges: Vec<Relation>,
}

impl Path {
    pub fn hops(&self) -> usize {
        self.edges.len()
    }

    /// Checks the path invariants against `graph`: node/edge counts agree,
    /// every edge exists and joins its neighbors, no node repeats, at most
    /// `max_hops` edges.
    pub fn validate(&self, graph: &KnowledgeGraph, max_hops: usize) -> Result<(), String> {
        if self.nodes.len() != self.edges.len() + 1 {
            return Err(format!("{} nodes for {} edges", self.nodes.len(), self.edges.len()));
        }
        if self.hops() > max_hops {
            return Err(format!("{} hops exceeds {max_hops}", self.hops()));
        }
        let distinct: BTreeSet<&String> = self.nodes.iter().collect();
        if distinct.len() != self.nodes.len() {
            return Err("path repeats a node".into());
        }
        for (i, edge) in self.edges.iter().enumerate() {
            if !edge.joins(&self.nodes[i], &self.nodes[i + 1]) {
                return Err(format!("edge {edge} does not join {} and {}", self.nodes[i], self.nodes[i + 1]));
            }
            if graph.relations().binary_search(edge).is_err() {
                return Err(format!("edge {edge} is not in the graph"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    FromPath,
    FromTitleNeighborhood,
    Both,
}

impl Origin {
    fn merge(self, other: Origin) -> Origin {
        if self == other {
            self
        } else {
            Origin::Both
        }
    }
}

/// Nodes and edges of a retrieved subgraph, each tagged with where it came
/// from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgraph {
    pub nodes: BTreeMap<String, Origin>,
    pub edges: BTreeMap<Relation, Origin>,
}

impl Subgraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn add_node(&mut self, id: &str, origin: Origin) {
        self.nodes.entry(id.to_owned()).and_modify(|o| *o = o.merge(origin)).or_insert(origin);
    }

    /// Adds the edge together with both endpoints.
    pub fn add_edge(&mut self, edge: &Relation, origin: Origin) {
        self.add_node(&edge.source, origin);
        self.add_node(&edge.target, origin);
        self.edges.entry(edge.clone()).and_modify(|o| *o = o.merge(origin)).or_insert(origin);
    }

    /// Set union; elements present in both operands end up tagged by
    /// merging their tags.
    pub fn union(&mut self, other: &Subgraph) {
        for (id, &origin) in &other.nodes {
            self.add_node(id, origin);
        }
        for (edge, &origin) in &other.edges {
            self.edges.entry(edge.clone()).and_modify(|o| *o = o.merge(origin)).or_insert(origin);
        }
    }
}

/// All unordered pairs of distinct entities drawn from two different
/// keyword groups, deduplicated and sorted.
pub fn pair_entities<S: AsRef<str>>(groups: &[Vec<S>]) -> Vec<(String, String)> {
    let mut pairs = BTreeSet::new();
    for (i, left) in groups.iter().enumerate() {
        for right in &groups[i + 1..] {
            for a in left {
                for b in right {
                    let (a, b) = (a.as_ref(), b.as_ref());
                    if a == b {
                        continue;
                    }
                    let pair = if a < b { (a, b) } else { (b, a) };
                    pairs.insert((pair.0.to_owned(), pair.1.to_owned()));
                }
            }
        }
    }
    pairs.into_iter().collect()
}

/// Node-level view of the allowed edges around one node: neighbor id to the
/// parallel edges reaching it, both sorted.
type Hop<'g> = (&'g str, Vec<&'g Relation>);

struct PathSearch<'g> {
    graph: &'g KnowledgeGraph,
    allowed: &'g BTreeSet<String>,
    adjacency: HashMap<&'g str, Vec<Hop<'g>>>,
}

impl<'g> PathSearch<'g> {
    fn hops_from(&mut self, id: &'g str) -> &Vec<Hop<'g>> {
        let (graph, allowed) = (self.graph, self.allowed);
        self.adjacency.entry(id).or_insert_with(|| {
            let mut grouped: Vec<Hop<'g>> = Vec::new();
            for (rel, entity) in graph.neighbors(id, Some(allowed)).expect("node exists") {
                match grouped.last_mut() {
                    Some((nid, edges)) if *nid == entity.id => edges.push(rel),
                    _ => grouped.push((entity.id.as_str(), vec![rel])),
                }
            }
            grouped
        })
    }

    /// Hop distance to `target` for nodes within `limit` hops.
    fn distances_to(&mut self, target: &'g str, limit: usize) -> HashMap<&'g str, usize> {
        let mut dist = HashMap::from([(target, 0usize)]);
        let mut queue = VecDeque::from([target]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u];
            if d == limit {
                continue;
            }
            let next: Vec<&'g str> = self.hops_from(u).iter().map(|(v, _)| *v).collect();
            for v in next {
                if !dist.contains_key(v) {
                    dist.insert(v, d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

/// Simple paths between `pair.0` and `pair.1` using only `allowed`
/// relation types, traversed in either direction.
///
/// Paths come back shortest first; paths of equal length are ordered by
/// node-id sequence, then by relation sequence. At most `max_paths` are
/// returned.
pub fn find_paths(
    graph: &KnowledgeGraph,
    pair: (&str, &str),
    allowed: &BTreeSet<String>,
    max_hops: usize,
    max_paths: usize,
) -> Result<Vec<Path>, GraphError> {
    let (from, to) = pair;
    let source = graph.entity(from).ok_or_else(|| GraphError::UnknownEntity(from.to_owned()))?;
    let target = graph.entity(to).ok_or_else(|| GraphError::UnknownEntity(to.to_owned()))?;
    if from == to || allowed.is_empty() || max_paths == 0 || max_hops == 0 {
        return Ok(Vec::new());
    }
    let mut search = PathSearch { graph, allowed, adjacency: HashMap::new() };
    let dist = search.distances_to(target.id.as_str(), max_hops);
    let Some(&shortest) = dist.get(source.id.as_str()) else {
        return Ok(Vec::new());
    };

    let mut found = Vec::new();
    for length in shortest..=max_hops {
        let mut stack = vec![source.id.as_str()];
        node_sequences(&mut search, &dist, target.id.as_str(), length, &mut stack, &mut |nodes, search| {
            expand_parallel_edges(search, nodes, max_paths, &mut found);
            found.len() >= max_paths
        });
        if found.len() >= max_paths {
            break;
        }
    }
    found.truncate(max_paths);
    Ok(found)
}

/// Depth-first enumeration of simple node sequences of exactly `length`
/// hops ending at `target`, in lexicographic order. `emit` returns true to
/// stop the search.
fn node_sequences<'g>(
    search: &mut PathSearch<'g>,
    dist: &HashMap<&'g str, usize>,
    target: &'g str,
    length: usize,
    stack: &mut Vec<&'g str>,
    emit: &mut dyn FnMut(&[&'g str], &mut PathSearch<'g>) -> bool,
) -> bool {
    let here = *stack.last().expect("non-empty stack");
    let remaining = length + 1 - stack.len();
    if remaining == 0 {
        return here == target && emit(stack, search);
    }
    let next: Vec<&'g str> = search.hops_from(here).iter().map(|(v, _)| *v).collect();
    for v in next {
        // the target may only appear as the final node
        if (v == target) != (remaining == 1) {
            continue;
        }
        if stack.contains(&v) || dist.get(v).is_none_or(|&d| d > remaining - 1) {
            continue;
        }
        stack.push(v);
        let stop = node_sequences(search, dist, target, length, stack, emit);
        stack.pop();
        if stop {
            return true;
        }
    }
    false
}

/// Emits every choice of parallel edges along a node sequence, in
/// lexicographic relation order, until `found` holds `max_paths` paths.
fn expand_parallel_edges<'g>(search: &mut PathSearch<'g>, nodes: &[&'g str], max_paths: usize, found: &mut Vec<Path>) {
    let options: Vec<Vec<&Relation>> = nodes
        .windows(2)
        .map(|w| {
            search
                .hops_from(w[0])
                .iter()
                .find(|(v, _)| *v == w[1])
                .map(|(_, edges)| edges.clone())
                .expect("consecutive nodes are adjacent")
        })
        .collect();
    let mut choice = vec![0usize; options.len()];
    loop {
        if found.len() >= max_paths {
            return;
        }
        found.push(Path {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            edges: choice.iter().zip(&options).map(|(&c, opts)| opts[c].clone()).collect(),
        });
        // odometer increment, last position fastest
        let mut pos = options.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            choice[pos] += 1;
            if choice[pos] < options[pos].len() {
                break;
            }
            choice[pos] = 0;
        }
    }
}

/// Title-anchored neighborhood of the relevant entities.
///
/// Every title node adjacent to a relevant entity joins with its connecting
/// edge (a relevant title anchors itself). Each included title then
/// contributes its direct edges to entities whose type is in
/// `target_types`.
pub fn title_neighbor_subgraph<S: AsRef<str>>(
    graph: &KnowledgeGraph,
    relevant: &BTreeSet<String>,
    target_types: &[S],
) -> Subgraph {
    let origin = Origin::FromTitleNeighborhood;
    let mut sub = Subgraph::default();
    let mut titles = BTreeSet::new();
    for id in relevant {
        if !graph.contains(id) {
            continue;
        }
        if graph.is_title(id) {
            sub.add_node(id, origin);
            titles.insert(id.clone());
            continue;
        }
        for (rel, neighbor) in graph.neighbors(id, None).expect("checked above") {
            if neighbor.entity_type == graph.title_type() {
                sub.add_edge(rel, origin);
                titles.insert(neighbor.id.clone());
            }
        }
    }
    for title in &titles {
        for (rel, neighbor) in graph.neighbors(title, None).expect("title exists") {
            if target_types.iter().any(|t| t.as_ref() == neighbor.entity_type) {
                sub.add_edge(rel, origin);
            }
        }
    }
    sub
}

/// Union of all path elements and the neighborhood subgraph.
pub fn assemble_subgraph(paths: &[Path], neighborhoods: &Subgraph) -> Subgraph {
    let mut sub = Subgraph::default();
    for path in paths {
        for node in &path.nodes {
            sub.add_node(node, Origin::FromPath);
        }
        for edge in &path.edges {
            sub.add_edge(edge, Origin::FromPath);
        }
    }
    sub.union(neighborhoods);
    sub
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg_store::Entity;

    fn chain(n: usize) -> KnowledgeGraph {
        let entities = (0..n).map(|i| Entity::new(format!("n{i}"), format!("node {i}"), "Model")).collect();
        let relations = (1..n).map(|i| Relation::new(format!("n{}", i - 1), format!("n{i}"), "next")).collect();
        KnowledgeGraph::from_parts(entities, relations, "Title").unwrap().0
    }

    fn types(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn pairs_across_groups_only() {
        assert_eq!(pair_entities(&[vec!["A"], vec!["B"]]), vec![("A".into(), "B".into())]);
        assert_eq!(pair_entities(&[vec!["A", "B"], vec!["B"]]), vec![("A".into(), "B".into())]);
        let groups = vec![vec!["a1", "a2"], vec!["b1", "b2", "b3"], vec!["c1"]];
        assert_eq!(pair_entities(&groups).len(), 11);
        assert!(pair_entities(&[vec!["A", "B"]]).is_empty());
        assert!(pair_entities::<&str>(&[]).is_empty());
    }

    #[test]
    fn adjacent_pair_yields_one_hop_path_first() {
        let g = chain(3);
        let paths = find_paths(&g, ("n0", "n1"), &types(&["next"]), 5, 10).unwrap();
        assert_eq!(paths[0].hops(), 1);
        assert_eq!(paths[0].nodes, vec!["n0", "n1"]);
    }

    #[test]
    fn hop_limit_is_enforced() {
        let g = chain(7);
        assert!(find_paths(&g, ("n0", "n6"), &types(&["next"]), 5, 10).unwrap().is_empty());
        assert_eq!(find_paths(&g, ("n0", "n5"), &types(&["next"]), 5, 10).unwrap().len(), 1);
        // direction is ignored
        assert_eq!(find_paths(&g, ("n5", "n0"), &types(&["next"]), 5, 10).unwrap()[0].nodes[0], "n5");
    }

    #[test]
    fn relation_filter_blocks_paths() {
        let g = chain(3);
        assert!(find_paths(&g, ("n0", "n2"), &types(&["other"]), 5, 10).unwrap().is_empty());
        assert!(matches!(find_paths(&g, ("n0", "zz"), &types(&["next"]), 5, 10), Err(GraphError::UnknownEntity(_))));
    }

    #[test]
    fn ordering_and_parallel_edges() {
        // a-b-d, a-c-d, plus two parallel a-b edges
        let entities = ["a", "b", "c", "d"].iter().map(|id| Entity::new(*id, *id, "Model")).collect();
        let relations = vec![
            Relation::new("a", "b", "x"),
            Relation::new("b", "a", "w"),
            Relation::new("b", "d", "x"),
            Relation::new("a", "c", "x"),
            Relation::new("c", "d", "x"),
            Relation::new("a", "d", "x"),
        ];
        let g = KnowledgeGraph::from_parts(entities, relations, "Title").unwrap().0;
        let paths = find_paths(&g, ("a", "d"), &types(&["x", "w"]), 5, 10).unwrap();
        let summary: Vec<(Vec<String>, Vec<String>)> = paths
            .iter()
            .map(|p| (p.nodes.clone(), p.edges.iter().map(|e| e.relation_type.clone()).collect()))
            .collect();
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(
            summary,
            vec![
                (s(&["a", "d"]), s(&["x"])),
                (s(&["a", "b", "d"]), s(&["w", "x"])),
                (s(&["a", "b", "d"]), s(&["x", "x"])),
                (s(&["a", "c", "d"]), s(&["x", "x"])),
            ]
        );
        for p in &paths {
            p.validate(&g, 5).unwrap();
        }
        assert_eq!(find_paths(&g, ("a", "d"), &types(&["x", "w"]), 5, 2).unwrap().len(), 2);
    }

    fn paper_graph() -> KnowledgeGraph {
        let entities = vec![
            Entity::new("P1", "Paper one", "Title"),
            Entity::new("m", "Method", "Model"),
            Entity::new("d1", "Data one", "Dataset"),
            Entity::new("d2", "Data two", "Dataset"),
            Entity::new("t", "Task", "Task"),
            Entity::new("orphan", "Orphan", "Model"),
        ];
        let relations = vec![
            Relation::new("P1", "m", "proposes"),
            Relation::new("P1", "d1", "evaluated_on"),
            Relation::new("P1", "d2", "evaluated_on"),
            Relation::new("P1", "t", "addresses"),
            Relation::new("orphan", "d1", "trained_on"),
        ];
        KnowledgeGraph::from_parts(entities, relations, "Title").unwrap().0
    }

    #[test]
    fn neighborhood_of_method_entity() {
        let g = paper_graph();
        let sub = title_neighbor_subgraph(&g, &types(&["m"]), &["Dataset"]);
        assert_eq!(sub.nodes.keys().cloned().collect::<Vec<_>>(), vec!["P1", "d1", "d2", "m"]);
        assert_eq!(sub.edge_count(), 3);
    }

    #[test]
    fn neighborhood_edge_cases() {
        let g = paper_graph();
        assert!(title_neighbor_subgraph(&g, &BTreeSet::new(), &["Dataset"]).is_empty());
        let own = title_neighbor_subgraph(&g, &types(&["P1"]), &["Task"]);
        assert_eq!(own.nodes.keys().cloned().collect::<Vec<_>>(), vec!["P1", "t"]);
        assert!(title_neighbor_subgraph(&g, &types(&["orphan"]), &["Dataset"]).is_empty());
    }

    #[test]
    fn assembly_tags_and_counts() {
        let g = paper_graph();
        let path = find_paths(&g, ("orphan", "d1"), &types(&["trained_on"]), 5, 10).unwrap();
        let hood = title_neighbor_subgraph(&g, &types(&["m"]), &["Task"]);
        let sub = assemble_subgraph(&path, &hood);
        assert_eq!(sub.node_count(), path[0].nodes.len() + hood.node_count());

        let hood2 = title_neighbor_subgraph(&g, &types(&["m"]), &["Dataset"]);
        let both = assemble_subgraph(&path, &hood2);
        assert_eq!(both.node_count(), 5);
        assert_eq!(both.nodes["d1"], Origin::Both);
        assert_eq!(both.nodes["orphan"], Origin::FromPath);
        assert_eq!(both.nodes["P1"], Origin::FromTitleNeighborhood);
    }
}
