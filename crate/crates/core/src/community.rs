//! Modularity-based partitioning of a weighted subgraph, capping the number
//! of communities, anchoring each on a title node and rendering it as text.
//!
//! Edges are treated as undirected; parallel edges between the same pair of
//! nodes add their weights. Modularity uses `m` = total undirected weight.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kg_store::{KnowledgeGraph, Provenance};
use crate::optimization::{WeightedEdge, WeightedSubgraph};

pub const DEFAULT_MAX_COMMUNITIES: usize = 3;

const GAIN_EPS: f64 = 1e-12;

/// Louvain runs per call; see [`louvain`].
pub const LOUVAIN_RUNS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Community {
    pub id: usize,
    pub members: BTreeSet<String>,
    pub central_title: Option<String>,
    pub theme: Option<String>,
}

/// Record of one merge performed to respect the community cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    /// Smallest member id of each merged community.
    pub merged: (String, String),
    pub inter_weight: f64,
    pub modularity_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityPartition {
    pub assignment: BTreeMap<String, usize>,
    /// Ordered by smallest member id; `communities[i].id == i`.
    pub communities: Vec<Community>,
    pub modularity: f64,
    pub max_communities: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub merges: Vec<MergeStep>,
}

impl CommunityPartition {
    /// Builds a partition from member groups, renumbering communities by
    /// their smallest member id.
    pub fn from_groups(wsub: &WeightedSubgraph, groups: Vec<BTreeSet<String>>, max_communities: usize) -> Self {
        let mut groups: Vec<BTreeSet<String>> = groups.into_iter().filter(|g| !g.is_empty()).collect();
        groups.sort_by(|a, b| a.first().cmp(&b.first()));
        let mut assignment = BTreeMap::new();
        for (i, g) in groups.iter().enumerate() {
            for n in g {
                assignment.insert(n.clone(), i);
            }
        }
        let communities = groups
            .into_iter()
            .enumerate()
            .map(|(id, members)| Community { id, members, central_title: None, theme: None })
            .collect();
        let modularity = modularity(wsub, &assignment);
        Self { assignment, communities, modularity, max_communities, merges: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.communities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.communities.is_empty()
    }
}

/// Undirected weighted graph over dense indices, nodes sorted by id.
#[derive(Debug, Clone)]
struct WeightedGraph {
    adj: Vec<BTreeMap<usize, f64>>,
    self_loops: Vec<f64>,
}

impl WeightedGraph {
    fn from_subgraph(wsub: &WeightedSubgraph) -> (Vec<String>, Self) {
        let ids: Vec<String> = wsub.nodes.iter().cloned().collect();
        let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut g = WeightedGraph { adj: vec![BTreeMap::new(); ids.len()], self_loops: vec![0.0; ids.len()] };
        for e in &wsub.edges {
            let (Some(&a), Some(&b)) = (index.get(e.relation.source.as_str()), index.get(e.relation.target.as_str()))
            else {
                continue;
            };
            g.add(a, b, e.weight);
        }
        (ids, g)
    }

    fn add(&mut self, a: usize, b: usize, w: f64) {
        if a == b {
            self.self_loops[a] += w;
        } else {
            *self.adj[a].entry(b).or_insert(0.0) += w;
            *self.adj[b].entry(a).or_insert(0.0) += w;
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn degree(&self, i: usize) -> f64 {
        self.adj[i].values().sum::<f64>() + 2.0 * self.self_loops[i]
    }

    fn total_weight(&self) -> f64 {
        let k: f64 = (0..self.len()).map(|i| self.degree(i)).sum();
        k / 2.0
    }

    fn modularity(&self, labels: &[usize]) -> f64 {
        let m = self.total_weight();
        if m <= 0.0 {
            return 0.0;
        }
        let k = labels.iter().copied().max().map_or(0, |x| x + 1);
        let mut internal = vec![0.0; k];
        let mut total = vec![0.0; k];
        for i in 0..self.len() {
            total[labels[i]] += self.degree(i);
            internal[labels[i]] += 2.0 * self.self_loops[i];
            for (&j, &w) in &self.adj[i] {
                if labels[j] == labels[i] {
                    internal[labels[i]] += w;
                }
            }
        }
        internal.iter().zip(&total).map(|(inn, tot)| inn / (2.0 * m) - (tot / (2.0 * m)).powi(2)).sum()
    }

    /// One local-moving phase from singletons, visiting nodes in `order`.
    /// Returns the labels (renumbered densely in order of first appearance)
    /// and whether any node moved.
    fn local_moves(&self, order: &[usize]) -> (Vec<usize>, bool) {
        let n = self.len();
        let m2 = 2.0 * self.total_weight();
        let mut labels: Vec<usize> = (0..n).collect();
        if m2 <= 0.0 {
            return (labels, false);
        }
        let degrees: Vec<f64> = (0..n).map(|i| self.degree(i)).collect();
        let mut tot = degrees.clone();
        let mut moved_any = false;
        loop {
            let mut moved = false;
            for &i in order {
                let current = labels[i];
                let mut links: BTreeMap<usize, f64> = BTreeMap::new();
                for (&j, &w) in &self.adj[i] {
                    *links.entry(labels[j]).or_insert(0.0) += w;
                }
                tot[current] -= degrees[i];
                let gain = |c: usize, link: f64| link - tot[c] * degrees[i] / m2;
                let mut best = current;
                let mut best_gain = gain(current, links.get(&current).copied().unwrap_or(0.0));
                for (&c, &link) in &links {
                    let g = gain(c, link);
                    if g > best_gain + GAIN_EPS {
                        best = c;
                        best_gain = g;
                    }
                }
                tot[best] += degrees[i];
                if best != current {
                    labels[i] = best;
                    moved = true;
                    moved_any = true;
                }
            }
            if !moved {
                break;
            }
        }
        (renumber(&labels), moved_any)
    }

    /// Kernighan-Lin style refinement: each sweep moves every node once, in
    /// turn picking the move with the best modularity change (negative
    /// allowed, an empty community included), then keeps the best state seen.
    /// Sweeps repeat while they improve modularity.
    fn kl_refine(&self, init: &[usize]) -> Vec<usize> {
        let n = self.len();
        let m2 = 2.0 * self.total_weight();
        let mut labels = renumber(init);
        if m2 <= 0.0 {
            return labels;
        }
        let degrees: Vec<f64> = (0..n).map(|i| self.degree(i)).collect();
        loop {
            let start_q = self.modularity(&labels);
            let mut state = labels.clone();
            let mut tot = vec![0.0; n];
            let mut size = vec![0usize; n];
            for i in 0..n {
                tot[state[i]] += degrees[i];
                size[state[i]] += 1;
            }
            let mut moved = vec![false; n];
            let mut q = start_q;
            let mut best: Option<(f64, Vec<usize>)> = None;
            for _ in 0..n {
                // (node, target, delta) of the best move among unmoved nodes
                let mut pick: Option<(usize, usize, f64)> = None;
                for i in (0..n).filter(|&i| !moved[i]) {
                    let current = state[i];
                    let mut links: BTreeMap<usize, f64> = BTreeMap::new();
                    for (&j, &w) in &self.adj[i] {
                        *links.entry(state[j]).or_insert(0.0) += w;
                    }
                    let rest = tot[current] - degrees[i];
                    let stay = links.get(&current).copied().unwrap_or(0.0) - rest * degrees[i] / m2;
                    let mut options: Vec<(usize, f64)> = links
                        .iter()
                        .filter(|(&c, _)| c != current)
                        .map(|(&c, &link)| (c, link - tot[c] * degrees[i] / m2))
                        .collect();
                    if size[current] > 1 {
                        let empty = size.iter().position(|&s| s == 0).expect("fewer communities than nodes");
                        options.push((empty, 0.0));
                    }
                    for (c, g) in options {
                        let delta = 2.0 * (g - stay) / m2;
                        if pick.is_none_or(|(_, _, d)| delta > d + GAIN_EPS) {
                            pick = Some((i, c, delta));
                        }
                    }
                }
                let Some((i, c, delta)) = pick else { break };
                tot[state[i]] -= degrees[i];
                size[state[i]] -= 1;
                tot[c] += degrees[i];
                size[c] += 1;
                state[i] = c;
                moved[i] = true;
                q += delta;
                if q > best.as_ref().map_or(start_q, |b| b.0) + GAIN_EPS {
                    best = Some((q, state.clone()));
                }
            }
            match best {
                Some((_, improved)) if self.modularity(&improved) > start_q + GAIN_EPS => labels = renumber(&improved),
                _ => return labels,
            }
        }
    }

    fn aggregate(&self, labels: &[usize]) -> WeightedGraph {
        let k = labels.iter().copied().max().map_or(0, |x| x + 1);
        let mut g = WeightedGraph { adj: vec![BTreeMap::new(); k], self_loops: vec![0.0; k] };
        for i in 0..self.len() {
            g.self_loops[labels[i]] += self.self_loops[i];
            for (&j, &w) in &self.adj[i] {
                if i < j {
                    g.add(labels[i], labels[j], w);
                }
            }
        }
        g
    }
}

/// Dense relabeling in order of first appearance, so community order
/// follows the smallest member index.
fn renumber(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Modularity of `assignment` over the undirected weighted subgraph. Nodes
/// missing from `assignment` are treated as singletons. Zero total weight
/// gives 0.
pub fn modularity(wsub: &WeightedSubgraph, assignment: &BTreeMap<String, usize>) -> f64 {
    let (ids, g) = WeightedGraph::from_subgraph(wsub);
    let mut dense = BTreeMap::new();
    let labels: Vec<usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let key = assignment.get(id).map_or((1, i), |&c| (0, c));
            let next = dense.len();
            *dense.entry(key).or_insert(next)
        })
        .collect();
    g.modularity(&labels)
}

/// Visiting order for one Louvain run: ascending for run 0, a seeded
/// shuffle otherwise.
fn visit_order(n: usize, rng: Option<&mut ChaCha8Rng>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(rng) = rng {
        order.shuffle(rng);
    }
    order
}

/// One multilevel run: local moves then aggregation until nothing moves,
/// then refinement on the original graph, restarting the aggregation from
/// the refined partition while refinement improves modularity.
fn louvain_run(base: &WeightedGraph, mut rng: Option<ChaCha8Rng>) -> Vec<usize> {
    let mut membership: Vec<usize> = (0..base.len()).collect();
    loop {
        let mut level = base.aggregate(&membership);
        loop {
            let order = visit_order(level.len(), rng.as_mut());
            let (labels, moved) = level.local_moves(&order);
            if !moved {
                break;
            }
            for c in membership.iter_mut() {
                *c = labels[*c];
            }
            level = level.aggregate(&labels);
        }
        let refined = base.kl_refine(&membership);
        if base.modularity(&refined) <= base.modularity(&membership) + GAIN_EPS {
            break;
        }
        membership = refined;
    }
    renumber(&membership)
}

/// Deterministic Louvain with strictly positive move gains. Run 0 visits
/// nodes in ascending id order; further runs use fixed-seed shuffled
/// orders, and the highest-modularity result wins (earliest run on ties).
/// Falls back to a single community if that scores higher.
pub fn louvain(wsub: &WeightedSubgraph, max_communities: usize) -> CommunityPartition {
    louvain_with_runs(wsub, max_communities, LOUVAIN_RUNS)
}

/// [`louvain`] with an explicit number of runs (at least one).
pub fn louvain_with_runs(wsub: &WeightedSubgraph, max_communities: usize, runs: usize) -> CommunityPartition {
    let (ids, base) = WeightedGraph::from_subgraph(wsub);
    let mut membership = louvain_run(&base, None);
    let mut best_q = base.modularity(&membership);
    for run in 1..runs.max(1) {
        let candidate = louvain_run(&base, Some(ChaCha8Rng::seed_from_u64(run as u64)));
        let q = base.modularity(&candidate);
        if q > best_q + GAIN_EPS {
            membership = candidate;
            best_q = q;
        }
    }

    let mut groups: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (i, &c) in membership.iter().enumerate() {
        groups.entry(c).or_default().insert(ids[i].clone());
    }
    let partition = CommunityPartition::from_groups(wsub, groups.into_values().collect(), max_communities);
    if !ids.is_empty() && partition.modularity < -GAIN_EPS {
        return CommunityPartition::from_groups(wsub, vec![wsub.nodes.clone()], max_communities);
    }
    partition
}

/// Total weight of edges running between communities `a` and `b`.
fn inter_weight(wsub: &WeightedSubgraph, a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    wsub.edges
        .iter()
        .filter(|e| {
            let (s, t) = (&e.relation.source, &e.relation.target);
            (a.contains(s) && b.contains(t)) || (b.contains(s) && a.contains(t))
        })
        .map(|e| e.weight)
        .sum()
}

/// Merges communities until at most `max_communities` remain. Each step
/// joins the pair with the largest inter-community weight; ties prefer
/// fewer combined nodes, then the pair whose smallest member ids come
/// first. A cap of zero is treated as one.
pub fn merge_to_max(
    partition: &CommunityPartition,
    wsub: &WeightedSubgraph,
    max_communities: usize,
) -> CommunityPartition {
    let cap = max_communities.max(1);
    let mut groups: Vec<BTreeSet<String>> = partition.communities.iter().map(|c| c.members.clone()).collect();
    let mut steps = partition.merges.clone();
    while groups.len() > cap {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let w = inter_weight(wsub, &groups[i], &groups[j]);
                let better = match best {
                    None => true,
                    Some((bi, bj, bw)) => {
                        if w > bw + GAIN_EPS {
                            true
                        } else if w < bw - GAIN_EPS {
                            false
                        } else {
                            let size = groups[i].len() + groups[j].len();
                            let best_size = groups[bi].len() + groups[bj].len();
                            // groups are sorted by smallest member, so (i, j) order is the id order
                            size < best_size
                        }
                    }
                };
                if better {
                    best = Some((i, j, w));
                }
            }
        }
        let (i, j, w) = best.expect("at least two communities");
        let merged = (groups[i].first().cloned().unwrap_or_default(), groups[j].first().cloned().unwrap_or_default());
        let absorbed = groups.remove(j);
        groups[i].extend(absorbed);
        let q = CommunityPartition::from_groups(wsub, groups.clone(), cap).modularity;
        steps.push(MergeStep { merged, inter_weight: w, modularity_after: q });
    }
    let mut out = CommunityPartition::from_groups(wsub, groups, cap);
    out.merges = steps;
    for c in &mut out.communities {
        if let Some(old) = partition.communities.iter().find(|o| o.members == c.members) {
            c.central_title = old.central_title.clone();
            c.theme = old.theme.clone();
        }
    }
    out
}

/// Weighted degree of `node` counting only edges to other members.
pub fn internal_degree(wsub: &WeightedSubgraph, members: &BTreeSet<String>, node: &str) -> f64 {
    wsub.edges
        .iter()
        .filter(|e| e.relation.touches(node))
        .filter(|e| {
            let other = e.relation.other_end(node);
            members.contains(other)
        })
        .map(|e| e.weight)
        .sum()
}

/// The title node of the community with the largest within-community
/// weighted degree; ties go to the smaller id.
pub fn central_title(graph: &KnowledgeGraph, wsub: &WeightedSubgraph, members: &BTreeSet<String>) -> Option<String> {
    let mut best: Option<(&String, f64)> = None;
    for id in members.iter().filter(|id| graph.is_title(id)) {
        let d = internal_degree(wsub, members, id);
        if best.is_none_or(|(_, bd)| d > bd) {
            best = Some((id, d));
        }
    }
    best.map(|(id, _)| id.clone())
}

/// Fills in `central_title` for every community.
pub fn anchor_communities(graph: &KnowledgeGraph, wsub: &WeightedSubgraph, partition: &mut CommunityPartition) {
    for c in &mut partition.communities {
        c.central_title = central_title(graph, wsub, &c.members);
    }
}

fn edge_line(graph: &KnowledgeGraph, e: &WeightedEdge) -> String {
    let name = |id: &str| graph.entity(id).map_or_else(|| id.to_owned(), |x| x.name.clone());
    let tag = match (e.relation.provenance, &e.description) {
        (Provenance::Completed, Some(d)) => format!("completed: {d}"),
        (p, _) => p.as_str().to_owned(),
    };
    format!(
        "{} \u{2014}{}\u{2014} {} (weight {:.4}, {})",
        name(&e.relation.source),
        e.relation.relation_type.replace('_', " "),
        name(&e.relation.target),
        e.weight,
        tag
    )
}

/// Text rendering of one community: a header naming the anchor title, then
/// one line per internal edge, heaviest first.
pub fn verbalize(
    graph: &KnowledgeGraph,
    wsub: &WeightedSubgraph,
    members: &BTreeSet<String>,
    central: Option<&str>,
) -> String {
    let header = match central {
        Some(id) => {
            let name = graph.entity(id).map_or(id, |e| e.name.as_str());
            format!("Community anchored by \"{name}\"")
        }
        None => "unanchored community".to_owned(),
    };
    let mut edges: Vec<&WeightedEdge> = wsub
        .edges
        .iter()
        .filter(|e| members.contains(&e.relation.source) && members.contains(&e.relation.target))
        .collect();
    edges.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.relation.cmp(&b.relation)));
    let mut lines = vec![header];
    lines.extend(edges.into_iter().map(|e| edge_line(graph, e)));
    lines.join("\n")
}
