//! The directed, weighted user-interaction graph and per-relation
//! community assignments.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Friend,
    Retweet,
    Quote,
    Reply,
}

impl Relation {
    pub const ALL: [Relation; 4] = [Relation::Friend, Relation::Retweet, Relation::Quote, Relation::Reply];

    fn bit(self) -> u8 {
        match self {
            Relation::Friend => 1,
            Relation::Retweet => 2,
            Relation::Quote => 4,
            Relation::Reply => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Friend => "friend",
            Relation::Retweet => "retweet",
            Relation::Quote => "quote",
            Relation::Reply => "reply",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "friend" | "friendship" => Ok(Relation::Friend),
            "retweet" => Ok(Relation::Retweet),
            "quote" => Ok(Relation::Quote),
            "reply" => Ok(Relation::Reply),
            other => Err(Error::invalid(format!(
                "unknown relation `{other}` (expected friend, retweet, quote or reply)"
            ))),
        }
    }
}

/// Set of relation types present on one directed edge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct RelationSet(u8);

impl RelationSet {
    pub fn insert(&mut self, r: Relation) {
        self.0 |= r.bit();
    }

    pub fn contains(self, r: Relation) -> bool {
        self.0 & r.bit() != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationRecord {
    pub src: String,
    pub dst: String,
    pub relation: Relation,
}

impl RelationRecord {
    pub fn new(src: impl Into<String>, dst: impl Into<String>, relation: Relation) -> Self {
        RelationRecord { src: src.into(), dst: dst.into(), relation }
    }
}

/// Directed weighted graph over user ids. Nodes are kept in sorted id
/// order and out-neighbor lists are sorted by node index.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    out: Vec<Vec<(usize, f64)>>,
    relations: HashMap<(usize, usize), RelationSet>,
    edge_count: usize,
}

impl InteractionGraph {
    /// Builds from explicit weighted edges; nodes are the union of the
    /// listed ids and all endpoints.
    pub fn from_weighted_edges<I>(nodes: I, edges: &[(String, String, f64)]) -> Result<Self>
    where
        I: IntoIterator<Item = String>,
    {
        let mut set: BTreeSet<String> = nodes.into_iter().collect();
        for (s, d, _) in edges {
            set.insert(s.clone());
            set.insert(d.clone());
        }
        let nodes: Vec<String> = set.into_iter().collect();
        let index: HashMap<String, usize> = nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let mut adj: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (s, d, w) in edges {
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::invalid(format!("edge {s} -> {d} has non-positive weight {w}")));
            }
            let key = (index[s], index[d]);
            if adj.insert(key, *w).is_some() {
                return Err(Error::invalid(format!("duplicate edge {s} -> {d}")));
            }
        }
        let mut out = vec![Vec::new(); nodes.len()];
        for (&(s, d), &w) in &adj {
            out[s].push((d, w));
        }
        Ok(InteractionGraph { nodes, index, out, relations: HashMap::new(), edge_count: adj.len() })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_name(&self, i: usize) -> &str {
        &self.nodes[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn out_neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.out[i]
    }

    pub fn weight(&self, src: usize, dst: usize) -> Option<f64> {
        let nbrs = &self.out[src];
        nbrs.binary_search_by_key(&dst, |&(n, _)| n).ok().map(|k| nbrs[k].1)
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.weight(src, dst).is_some()
    }

    /// Relation types behind an edge. Empty for graphs loaded from a plain
    /// edge list.
    pub fn relations(&self, src: usize, dst: usize) -> RelationSet {
        self.relations.get(&(src, dst)).copied().unwrap_or_default()
    }

    /// Edges in (src, dst) index order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(s, nbrs)| nbrs.iter().map(move |&(d, w)| (s, d, w)))
    }

    /// Symmetrized adjacency: for each node, the sorted set of nodes linked
    /// to it in either direction.
    pub fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.node_count()];
        for (s, d, _) in self.edges() {
            nb[s].insert(d);
            nb[d].insert(s);
        }
        nb.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.node_count()];
        for (_, d, _) in self.edges() {
            deg[d] += 1;
        }
        deg
    }
}

/// Edge weight is the number of distinct relation types observed for the
/// ordered pair. With `require_friendship`, pairs without a friend record
/// are dropped. Self-loops are discarded.
pub fn build_graph(records: &[RelationRecord], require_friendship: bool) -> InteractionGraph {
    let mut pairs: BTreeMap<(&str, &str), RelationSet> = BTreeMap::new();
    let mut self_loops = 0usize;
    for r in records {
        if r.src == r.dst {
            self_loops += 1;
            continue;
        }
        pairs.entry((r.src.as_str(), r.dst.as_str())).or_default().insert(r.relation);
    }
    if self_loops > 0 {
        log::warn!("dropped {self_loops} self-loop relation record(s)");
    }
    pairs.retain(|_, set| !require_friendship || set.contains(Relation::Friend));

    let nodes: Vec<String> = pairs
        .keys()
        .flat_map(|(s, d)| [*s, *d])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_string)
        .collect();
    let index: HashMap<String, usize> = nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    let mut out = vec![Vec::new(); nodes.len()];
    let mut relations = HashMap::with_capacity(pairs.len());
    let mut keyed: Vec<((usize, usize), RelationSet)> =
        pairs.iter().map(|((s, d), set)| ((index[*s], index[*d]), *set)).collect();
    keyed.sort_by_key(|(k, _)| *k);
    for ((s, d), set) in keyed {
        out[s].push((d, set.len() as f64));
        relations.insert((s, d), set);
    }
    InteractionGraph { edge_count: relations.len(), nodes, index, out, relations }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub avg_in_degree: f64,
    pub avg_out_degree: f64,
}

impl GraphStats {
    pub fn from_counts(node_count: usize, edge_count: usize) -> Self {
        let avg = if node_count == 0 { 0.0 } else { edge_count as f64 / node_count as f64 };
        GraphStats { node_count, edge_count, avg_in_degree: avg, avg_out_degree: avg }
    }
}

pub fn graph_stats(g: &InteractionGraph) -> GraphStats {
    let n = g.node_count();
    if n == 0 {
        return GraphStats::from_counts(0, 0);
    }
    let in_total: usize = g.in_degrees().iter().sum();
    let out_total: usize = (0..n).map(|i| g.out_neighbors(i).len()).sum();
    GraphStats {
        node_count: n,
        edge_count: g.edge_count(),
        avg_in_degree: in_total as f64 / n as f64,
        avg_out_degree: out_total as f64 / n as f64,
    }
}

/// User id to dense community id (`0..count`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommunityMap {
    pub assignment: HashMap<String, usize>,
    pub count: usize,
}

impl CommunityMap {
    pub fn from_pairs<'a, I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, usize)>,
    {
        let assignment: HashMap<String, usize> = pairs.into_iter().map(|(u, c)| (u.to_string(), c)).collect();
        let count = assignment.values().max().map_or(0, |m| m + 1);
        CommunityMap { assignment, count }
    }

    pub fn get(&self, user: &str) -> Option<usize> {
        self.assignment.get(user).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

const LPA_MAX_ITER: usize = 100;

/// Synchronous label propagation over the subgraph of edges carrying
/// `relation`, treated as undirected. Each node counts its own label once
/// alongside its neighbors; ties go to the label with the best seeded
/// priority.
pub fn community_detect(g: &InteractionGraph, relation: Relation, seed: u64) -> CommunityMap {
    let mut members: BTreeSet<usize> = BTreeSet::new();
    let mut adj: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
    for (s, d, _) in g.edges() {
        if !g.relations(s, d).contains(relation) {
            continue;
        }
        members.insert(s);
        members.insert(d);
        *adj.entry(s).or_default().entry(d).or_insert(0.0) += 1.0;
        *adj.entry(d).or_default().entry(s).or_insert(0.0) += 1.0;
    }
    let nodes: Vec<usize> = members.into_iter().collect();
    let assignment = label_propagation(&nodes, &adj, seed);
    let names = nodes.iter().map(|&n| g.node_name(n));
    let assignment: HashMap<String, usize> = names.map(str::to_string).zip(assignment.iter().copied()).collect();
    let count = assignment.values().max().map_or(0, |m| m + 1);
    CommunityMap { assignment, count }
}

pub(crate) fn label_propagation(
    nodes: &[usize],
    adj: &BTreeMap<usize, BTreeMap<usize, f64>>,
    seed: u64,
) -> Vec<usize> {
    let n = nodes.len();
    if n == 0 {
        return Vec::new();
    }
    let local: HashMap<usize, usize> = nodes.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let neighbors: Vec<Vec<(usize, f64)>> = nodes
        .iter()
        .map(|g| {
            adj.get(g)
                .map(|m| m.iter().map(|(d, w)| (local[d], *w)).collect())
                .unwrap_or_default()
        })
        .collect();
    // priority[label]: lower wins ties
    let mut priority: Vec<usize> = (0..n).collect();
    priority.shuffle(&mut rng::seeded(seed));

    let mut labels: Vec<usize> = (0..n).collect();
    for _ in 0..LPA_MAX_ITER {
        let next: Vec<usize> = (0..n)
            .map(|v| {
                let mut score: BTreeMap<usize, f64> = BTreeMap::new();
                *score.entry(labels[v]).or_insert(0.0) += 1.0;
                for &(u, w) in &neighbors[v] {
                    *score.entry(labels[u]).or_insert(0.0) += w;
                }
                score
                    .into_iter()
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(priority[b.0].cmp(&priority[a.0])))
                    .map(|(l, _)| l)
                    .expect("own label counted")
            })
            .collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    // dense ids in order of first appearance over sorted node ids
    let mut dense: HashMap<usize, usize> = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let k = dense.len();
            *dense.entry(*l).or_insert(k)
        })
        .collect()
}

pub fn load_relations(path: impl AsRef<Path>) -> Result<Vec<RelationRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (src, dst, rel) = (col("src")?, col("dst")?, col("relation")?);
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let get = |i: usize| record.get(i).unwrap_or("").trim().to_string();
        let relation = get(rel).parse().map_err(|e: Error| Error::Malformed { line, reason: e.to_string() })?;
        let (s, d) = (get(src), get(dst));
        if s.is_empty() || d.is_empty() {
            return Err(Error::Malformed { line, reason: "empty user id".into() });
        }
        out.push(RelationRecord { src: s, dst: d, relation });
    }
    Ok(out)
}

fn format_weight(w: f64) -> String {
    if w.fract() == 0.0 && w.abs() < 1e15 {
        format!("{}", w as i64)
    } else {
        format!("{w}")
    }
}

/// Writes `src dst weight` lines in edge order. Node ids containing
/// whitespace cannot be represented and are rejected.
pub fn write_edge_list(g: &InteractionGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(bad) = g.nodes().iter().find(|n| n.chars().any(char::is_whitespace)) {
        return Err(Error::invalid(format!("node id `{bad}` contains whitespace")));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (s, d, wt) in g.edges() {
        writeln!(w, "{} {} {}", g.node_name(s), g.node_name(d), format_weight(wt)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<InteractionGraph> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut edges = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::Malformed { line: i + 1, reason };
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(bad(format!("expected `src dst weight`, got {} field(s)", parts.len())));
        }
        let w: f64 = parts[2].parse().map_err(|_| bad(format!("bad weight `{}`", parts[2])))?;
        if !(w.is_finite() && w > 0.0) {
            return Err(bad(format!("weight must be positive, got {w}")));
        }
        edges.push((parts[0].to_string(), parts[1].to_string(), w));
    }
    InteractionGraph::from_weighted_edges(std::iter::empty(), &edges).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::invalid(format!("{}: {m}", path.display())),
        other => other,
    })
}
