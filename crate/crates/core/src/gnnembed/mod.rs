//! Node embeddings from random walks over the interaction graph.
//!
//! Walks are generated with [`generate_walks`] (deepwalk, node2vec or a
//! degree-sequence struc2vec) and fed to [`train_skipgram`]. Walk corpora
//! round-trip through a plain text file, one walk per line.

mod skipgram;
mod struc;
mod walk;

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::netgraph::InteractionGraph;
use crate::{Error, Result};

pub use skipgram::{
    load_node_embedding, save_node_embedding, train_skipgram, train_skipgram_with, user_vector, NodeEmbedding, PairGradients,
    SkipGramConfig, SkipGramModel, SkipGramReport,
};
pub use struc::{dtw_distance, layer_distances};
pub use walk::transition_probs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkStrategy {
    DeepWalk,
    Node2Vec,
    Struc2Vec,
}

impl WalkStrategy {
    pub const ALL: [WalkStrategy; 3] = [WalkStrategy::DeepWalk, WalkStrategy::Node2Vec, WalkStrategy::Struc2Vec];

    pub fn settings_name(self) -> &'static str {
        match self {
            WalkStrategy::DeepWalk => "DeepWalk",
            WalkStrategy::Node2Vec => "Node2Vec",
            WalkStrategy::Struc2Vec => "Struc2Vec",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WalkStrategy::DeepWalk => "deepwalk",
            WalkStrategy::Node2Vec => "node2vec",
            WalkStrategy::Struc2Vec => "struc2vec",
        }
    }
}

impl fmt::Display for WalkStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WalkStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WalkStrategy::ALL
            .into_iter()
            .find(|w| w.as_str().eq_ignore_ascii_case(s) || w.settings_name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown walk strategy `{s}` (expected deepwalk, node2vec or struc2vec)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    pub strategy: WalkStrategy,
    pub walks_per_node: usize,
    pub walk_length: usize,
    /// node2vec return parameter.
    pub p: f64,
    /// node2vec in-out parameter.
    pub q: f64,
    /// struc2vec layer count (layers `0..layers`).
    pub layers: usize,
    /// struc2vec probability of moving within the current layer.
    pub stay_prob: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            strategy: WalkStrategy::DeepWalk,
            walks_per_node: 10,
            walk_length: 80,
            p: 1.0,
            q: 1.0,
            layers: 3,
            stay_prob: 0.3,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walks_per_node < 1 {
            return Err(Error::invalid("walks_per_node must be at least 1"));
        }
        if self.walk_length < 2 {
            return Err(Error::invalid("walk_length must be at least 2"));
        }
        if !(self.p > 0.0 && self.p.is_finite() && self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::invalid(format!("p and q must be positive, got p={} q={}", self.p, self.q)));
        }
        if self.strategy == WalkStrategy::Struc2Vec {
            if self.layers < 1 {
                return Err(Error::invalid("struc2vec needs at least one layer"));
            }
            if !(self.stay_prob > 0.0 && self.stay_prob <= 1.0) {
                return Err(Error::invalid(format!("stay_prob must be in (0, 1], got {}", self.stay_prob)));
            }
        }
        Ok(())
    }
}

/// Walks as node-id sequences, grouped by start node (sorted id order),
/// `walks_per_node` consecutive walks per start node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WalkCorpus {
    pub walks: Vec<Vec<String>>,
}

impl WalkCorpus {
    pub fn len(&self) -> usize {
        self.walks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walks.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.walks.iter().map(Vec::len).sum()
    }

    /// Checks the walk contract against `g`; see [`validate_walks`].
    pub fn validate(&self, g: &InteractionGraph, max_len: usize, require_edges: bool) -> Result<()> {
        validate_walks(self.walks.iter().map(|w| w.iter().map(String::as_str)), Some(g), max_len, require_edges).map(|_| ())
    }
}

/// Dispatches on `cfg.strategy`.
pub fn generate_walks(g: &InteractionGraph, cfg: &WalkConfig) -> Result<WalkCorpus> {
    cfg.validate()?;
    if g.is_empty() {
        return Err(Error::EmptyInput("graph has no nodes".into()));
    }
    let idx = match cfg.strategy {
        WalkStrategy::DeepWalk | WalkStrategy::Node2Vec => walk::first_and_second_order(g, cfg),
        WalkStrategy::Struc2Vec => struc::walks(g, cfg),
    };
    Ok(to_corpus(g, idx))
}

/// struc2vec walks regardless of `cfg.strategy`.
pub fn struc2vec_walks(g: &InteractionGraph, cfg: &WalkConfig) -> Result<WalkCorpus> {
    let cfg = WalkConfig { strategy: WalkStrategy::Struc2Vec, ..cfg.clone() };
    generate_walks(g, &cfg)
}

fn to_corpus(g: &InteractionGraph, walks: Vec<Vec<usize>>) -> WalkCorpus {
    let walks = walks
        .into_iter()
        .map(|w| w.into_iter().map(|i| g.node_name(i).to_string()).collect())
        .collect();
    WalkCorpus { walks }
}

/// Shared walk-file contract: every walk is non-empty and at most
/// `max_len` ids long; ids are known nodes of `g` when given, and with
/// `require_edges` every consecutive pair is an edge of `g`. Returns the
/// walk count. Errors carry 1-based walk numbers.
pub fn validate_walks<'a, W, I>(walks: W, g: Option<&InteractionGraph>, max_len: usize, require_edges: bool) -> Result<usize>
where
    W: IntoIterator<Item = I>,
    I: IntoIterator<Item = &'a str>,
{
    let mut n = 0;
    for (i, walk) in walks.into_iter().enumerate() {
        let bad = |reason: String| Error::Malformed { line: i + 1, reason };
        let mut prev: Option<usize> = None;
        let mut len = 0;
        for id in walk {
            len += 1;
            if id.is_empty() || id.chars().any(char::is_whitespace) {
                return Err(bad(format!("invalid node id `{id}`")));
            }
            if let Some(g) = g {
                let cur = g.index_of(id).ok_or_else(|| bad(format!("unknown node `{id}`")))?;
                if require_edges {
                    if let Some(p) = prev {
                        if !g.has_edge(p, cur) {
                            return Err(bad(format!("{} -> {id} is not an edge", g.node_name(p))));
                        }
                    }
                }
                prev = Some(cur);
            }
        }
        if len == 0 {
            return Err(bad("empty walk".into()));
        }
        if len > max_len {
            return Err(bad(format!("walk has {len} ids, limit is {max_len}")));
        }
        n += 1;
    }
    Ok(n)
}

pub fn write_walks(corpus: &WalkCorpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for walk in &corpus.walks {
        writeln!(w, "{}", walk.join(" ")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a walk file. Lines must be single-space separated ids with no
/// leading or trailing whitespace.
pub fn read_walks(path: impl AsRef<Path>) -> Result<WalkCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut walks = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let walk: Vec<String> = line.split(' ').map(str::to_string).collect();
        if walk.iter().any(|t| t.is_empty() || t.chars().any(char::is_whitespace)) {
            return Err(Error::Malformed { line: i + 1, reason: "walk lines are non-empty ids separated by single spaces".into() });
        }
        walks.push(walk);
    }
    Ok(WalkCorpus { walks })
}

/// Validates a walk file produced by any walker; see [`validate_walks`].
pub fn validate_walk_file(
    path: impl AsRef<Path>,
    g: Option<&InteractionGraph>,
    max_len: usize,
    require_edges: bool,
) -> Result<usize> {
    let corpus = read_walks(path)?;
    validate_walks(corpus.walks.iter().map(|w| w.iter().map(String::as_str)), g, max_len, require_edges)
}
