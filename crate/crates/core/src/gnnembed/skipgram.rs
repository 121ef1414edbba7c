use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::walk::{cumulative, sample_cdf};
use super::WalkCorpus;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial learning rate, decayed linearly over training.
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig { dim: 128, window: 5, negatives: 5, epochs: 5, learning_rate: 0.025, seed: 0 }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::invalid(format!("embedding dim must be at least 2, got {}", self.dim)));
        }
        if self.window == 0 {
            return Err(Error::invalid("window 0 yields no context pairs"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("bad learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipGramReport {
    /// Mean pair loss per epoch, measured before each update.
    pub epoch_losses: Vec<f64>,
    pub pairs_per_epoch: usize,
}

/// Node vectors keyed by id, in sorted id order.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbedding {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Array2<f64>,
}

impl NodeEmbedding {
    pub fn new(ids: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if ids.len() != vectors.nrows() {
            return Err(Error::DimensionMismatch { expected: ids.len(), actual: vectors.nrows() });
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("node embedding has non-finite entries"));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(NodeEmbedding { ids, index, vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn get(&self, id: &str) -> Option<ArrayView1<'_, f64>> {
        self.index.get(id).map(|&i| self.vectors.row(i))
    }
}

/// Stored vector for `id`, or zeros of the embedding dim for unknown users.
pub fn user_vector(emb: &NodeEmbedding, id: &str) -> Array1<f64> {
    emb.get(id).map(|v| v.to_owned()).unwrap_or_else(|| Array1::zeros(emb.dim()))
}

/// Word2vec text format: a `count dim` header, then `id v1 .. vdim`.
pub fn save_node_embedding(emb: &NodeEmbedding, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{} {}", emb.len(), emb.dim()).map_err(io)?;
    for (id, row) in emb.ids.iter().zip(emb.vectors.rows()) {
        write!(w, "{id}").map_err(io)?;
        for v in row {
            write!(w, " {v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_node_embedding(path: impl AsRef<Path>) -> Result<NodeEmbedding> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().ok_or(Error::EmptyInput(format!("{} is empty", path.display())))?;
    let header = header.map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, reason: String| Error::Malformed { line, reason };
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(1, format!("bad header `{header}`"))))
        .collect::<Result<_>>()?;
    let [n, dim] = dims[..] else {
        return Err(bad(1, format!("expected `count dim` header, got `{header}`")));
    };
    let mut ids = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * dim);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(id) = parts.next() else { continue };
        let before = data.len();
        for t in parts {
            data.push(t.parse::<f64>().map_err(|_| bad(i + 2, format!("bad value `{t}`")))?);
        }
        if data.len() - before != dim {
            return Err(bad(i + 2, format!("expected {dim} values, got {}", data.len() - before)));
        }
        ids.push(id.to_string());
    }
    if ids.len() != n {
        return Err(Error::invalid(format!("{}: header says {n} vectors, found {}", path.display(), ids.len())));
    }
    let vectors = Array2::from_shape_vec((n, dim), data).expect("shape checked");
    NodeEmbedding::new(ids, vectors)
}

/// Skip-gram with negative sampling over a node vocabulary. `w_in` holds
/// center vectors, `w_out` context vectors. The exported embedding is
/// their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramModel {
    pub vocab: Vec<String>,
    pub w_in: Array2<f64>,
    pub w_out: Array2<f64>,
}

/// Gradients of one (center, context, negatives) loss term.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradients {
    pub loss: f64,
    pub d_in: Array2<f64>,
    pub d_out: Array2<f64>,
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl SkipGramModel {
    /// Center vectors uniform in `±0.5/dim`, context vectors zero.
    pub fn new(vocab: Vec<String>, dim: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let bound = 0.5 / dim as f64;
        let w_in = Array2::from_shape_simple_fn((vocab.len(), dim), || rng.random_range(-bound..bound));
        let w_out = Array2::zeros((vocab.len(), dim));
        SkipGramModel { vocab, w_in, w_out }
    }

    pub fn dim(&self) -> usize {
        self.w_in.ncols()
    }

    /// `-ln σ(u_ctx·v_c) - Σ ln σ(-u_n·v_c)`.
    pub fn pair_loss(&self, center: usize, context: usize, negatives: &[usize]) -> f64 {
        let v = self.w_in.row(center);
        let mut loss = -log_sigmoid(self.w_out.row(context).dot(&v));
        for &n in negatives {
            loss -= log_sigmoid(-self.w_out.row(n).dot(&v));
        }
        loss
    }

    /// Dense gradients of [`pair_loss`](Self::pair_loss), obtained by
    /// running the training update with unit learning rate on a copy.
    /// Exact when `context` and `negatives` are distinct.
    pub fn pair_gradients(&self, center: usize, context: usize, negatives: &[usize]) -> PairGradients {
        let mut copy = self.clone();
        let dim = self.dim();
        let mut scratch = vec![0.0; dim];
        let loss = {
            let w_out = copy.w_out.as_slice_mut().expect("standard layout");
            let row = copy.w_in.row_mut(center).into_slice().expect("standard layout");
            sgns_update(row, w_out, dim, context, negatives, 1.0, &mut scratch)
        };
        PairGradients { loss, d_in: &self.w_in - &copy.w_in, d_out: &self.w_out - &copy.w_out }
    }

    pub fn embedding(&self) -> Result<NodeEmbedding> {
        NodeEmbedding::new(self.vocab.clone(), &self.w_in + &self.w_out)
    }
}

/// One negative-sampling step for a center row. Context-row updates use
/// the pre-update center vector; the center update is applied last.
/// Returns the loss before the update.
fn sgns_update(
    center: &mut [f64],
    w_out: &mut [f64],
    dim: usize,
    context: usize,
    negatives: &[usize],
    lr: f64,
    d_center: &mut [f64],
) -> f64 {
    d_center.fill(0.0);
    let mut loss = 0.0;
    let targets = std::iter::once((context, 1.0)).chain(negatives.iter().map(|&n| (n, 0.0)));
    for (o, label) in targets {
        let u = &mut w_out[o * dim..(o + 1) * dim];
        let s: f64 = u.iter().zip(center.iter()).map(|(a, b)| a * b).sum();
        loss -= if label == 1.0 { log_sigmoid(s) } else { log_sigmoid(-s) };
        let g = sigmoid(s) - label;
        for k in 0..dim {
            d_center[k] += g * u[k];
            u[k] -= lr * g * center[k];
        }
    }
    for k in 0..dim {
        center[k] -= lr * d_center[k];
    }
    loss
}

/// Trains node vectors on `corpus`. The vocabulary is every id in the
/// corpus, sorted. Negatives are drawn from the unigram distribution
/// raised to 0.75; draws equal to the center or the positive context are
/// skipped.
/// Deterministic for a fixed config.
pub fn train_skipgram(corpus: &WalkCorpus, cfg: &SkipGramConfig) -> Result<(NodeEmbedding, SkipGramReport)> {
    train_skipgram_with(corpus, cfg, |_, _| {})
}

/// [`train_skipgram`] with a callback after every epoch, receiving the
/// epoch index and the current model.
pub fn train_skipgram_with<F>(
    corpus: &WalkCorpus,
    cfg: &SkipGramConfig,
    mut on_epoch: F,
) -> Result<(NodeEmbedding, SkipGramReport)>
where
    F: FnMut(usize, &SkipGramModel),
{
    cfg.validate()?;
    if corpus.is_empty() || corpus.token_count() == 0 {
        return Err(Error::EmptyInput("walk corpus is empty".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for walk in &corpus.walks {
        for id in walk {
            *counts.entry(id.as_str()).or_default() += 1;
        }
    }
    let vocab: Vec<String> = counts.keys().map(|s| s.to_string()).collect();
    let index: HashMap<&str, usize> = counts.keys().enumerate().map(|(i, &s)| (s, i)).collect();
    let noise = cumulative(counts.values().map(|&c| (c as f64).powf(0.75)));
    let walks: Vec<Vec<usize>> =
        corpus.walks.iter().map(|w| w.iter().map(|id| index[id.as_str()]).collect()).collect();

    let dim = cfg.dim;
    let mut model = SkipGramModel::new(vocab, dim, rng::derive(cfg.seed, 0));
    let mut rng = rng::stream(cfg.seed, 1);
    let tokens = corpus.token_count();
    let total = (tokens * cfg.epochs) as f64;
    let min_lr = cfg.learning_rate * 1e-4;
    let mut processed = 0usize;
    let mut scratch = vec![0.0; dim];
    let mut negs = Vec::with_capacity(cfg.negatives);
    let mut report = SkipGramReport { epoch_losses: Vec::with_capacity(cfg.epochs), pairs_per_epoch: 0 };

    for epoch in 0..cfg.epochs {
        let w_in = model.w_in.as_slice_mut().expect("standard layout");
        let w_out = model.w_out.as_slice_mut().expect("standard layout");
        let mut loss_sum = 0.0;
        let mut pairs = 0usize;
        for walk in &walks {
            for (i, &c) in walk.iter().enumerate() {
                let lr = (cfg.learning_rate * (1.0 - processed as f64 / total)).max(min_lr);
                processed += 1;
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window + 1).min(walk.len());
                for (j, &ctx) in walk.iter().enumerate().take(hi).skip(lo) {
                    if j == i {
                        continue;
                    }
                    negs.clear();
                    for _ in 0..cfg.negatives {
                        let n = sample_cdf(&noise, &mut rng);
                        if n != ctx && n != c {
                            negs.push(n);
                        }
                    }
                    let row = &mut w_in[c * dim..(c + 1) * dim];
                    loss_sum += sgns_update(row, w_out, dim, ctx, &negs, lr, &mut scratch);
                    pairs += 1;
                }
            }
        }
        let loss = if pairs > 0 { loss_sum / pairs as f64 } else { 0.0 };
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: report.epoch_losses.len(), batch: 0, value: loss });
        }
        report.epoch_losses.push(loss);
        report.pairs_per_epoch = pairs;
        on_epoch(epoch, &model);
    }
    Ok((model.embedding()?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnnembed::{generate_walks, WalkConfig};
    use crate::netgraph::InteractionGraph;

    fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
    }

    fn corpus(walks: &[&[&str]]) -> WalkCorpus {
        WalkCorpus { walks: walks.iter().map(|w| w.iter().map(|s| s.to_string()).collect()).collect() }
    }

    #[test]
    fn argument_errors() {
        let c = corpus(&[&["a", "b"]]);
        let bad = |cfg: SkipGramConfig| train_skipgram(&c, &cfg).is_err();
        assert!(bad(SkipGramConfig { dim: 1, ..Default::default() }));
        assert!(bad(SkipGramConfig { window: 0, ..Default::default() }));
        assert!(train_skipgram(&WalkCorpus::default(), &SkipGramConfig::default()).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let vocab: Vec<String> = (0..5).map(|i| format!("n{i}")).collect();
        let mut m = SkipGramModel::new(vocab, 4, 3);
        let mut r = rng::seeded(9);
        m.w_out.mapv_inplace(|_| r.random_range(-0.8..0.8));
        m.w_in.mapv_inplace(|_| r.random_range(-0.8..0.8));
        let (c, ctx, negs) = (0, 1, [2, 3, 4]);
        let g = m.pair_gradients(c, ctx, &negs);
        assert!((g.loss - m.pair_loss(c, ctx, &negs)).abs() < 1e-12);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for which in 0..2 {
            for idx in 0..m.w_in.len() {
                let (i, k) = (idx / 4, idx % 4);
                let mut p = m.clone();
                let mut q = m.clone();
                let (pa, qa, analytic) = if which == 0 {
                    (&mut p.w_in, &mut q.w_in, g.d_in[[i, k]])
                } else {
                    (&mut p.w_out, &mut q.w_out, g.d_out[[i, k]])
                };
                pa[[i, k]] += h;
                qa[[i, k]] -= h;
                let num = (p.pair_loss(c, ctx, &negs) - q.pair_loss(c, ctx, &negs)) / (2.0 * h);
                let err = (num - analytic).abs() / (num.abs() + analytic.abs()).max(1e-8);
                if num.abs() + analytic.abs() > 1e-10 {
                    worst = worst.max(err);
                }
            }
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn loss_decreases_and_is_deterministic() {
        let c = corpus(&[&["a", "b", "c", "a", "b", "c"], &["d", "e", "d", "e"], &["c", "a", "b"]]);
        let c = WalkCorpus { walks: (0..40).flat_map(|_| c.walks.clone()).collect() };
        let cfg = SkipGramConfig { dim: 8, window: 2, epochs: 6, seed: 4, ..Default::default() };
        let (e1, r1) = train_skipgram(&c, &cfg).unwrap();
        let (e2, r2) = train_skipgram(&c, &cfg).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(r1, r2);
        let l = &r1.epoch_losses;
        assert!(l[1] < l[0] && l[2] < l[1] && l[5] < l[0], "{l:?}");
        assert_eq!(e1.ids(), ["a", "b", "c", "d", "e"]);
    }

    #[test]
    fn repeated_pair_cosine_increases() {
        let walks: Vec<&[&str]> = vec![&["a", "b"]; 50];
        let c = corpus(&walks);
        let cfg = SkipGramConfig { dim: 16, epochs: 5, seed: 1, ..Default::default() };
        let mut cos = Vec::new();
        train_skipgram_with(&c, &cfg, |_, m| {
            let e = m.embedding().unwrap();
            cos.push(cosine(e.get("a").unwrap(), e.get("b").unwrap()));
        })
        .unwrap();
        assert!(cos.windows(2).all(|w| w[1] > w[0]), "{cos:?}");
    }

    #[test]
    fn barbell_communities_separate() {
        let mut edges = Vec::new();
        for side in ["l", "r"] {
            for i in 0..20 {
                for j in 0..20 {
                    if i != j {
                        edges.push((format!("{side}{i}"), format!("{side}{j}"), 1.0));
                    }
                }
            }
        }
        edges.push(("l0".into(), "r0".into(), 1.0));
        edges.push(("r0".into(), "l0".into(), 1.0));
        let g = InteractionGraph::from_weighted_edges(std::iter::empty(), &edges).unwrap();
        let walks = generate_walks(&g, &WalkConfig { walks_per_node: 10, walk_length: 40, seed: 2, ..Default::default() })
            .unwrap();
        let (e, _) = train_skipgram(&walks, &SkipGramConfig { dim: 32, seed: 2, ..Default::default() }).unwrap();
        let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
        for a in g.nodes() {
            for b in g.nodes() {
                if a < b {
                    let cos = cosine(e.get(a).unwrap(), e.get(b).unwrap());
                    if a[..1] == b[..1] {
                        intra += cos;
                        ni += 1;
                    } else {
                        inter += cos;
                        nx += 1;
                    }
                }
            }
        }
        let margin = intra / ni as f64 - inter / nx as f64;
        assert!(margin >= 0.2, "{margin}");
    }

    #[test]
    fn unknown_user_gets_zeros_and_file_round_trips() {
        let e = NodeEmbedding::new(vec!["u1".into()], Array2::from_elem((1, 3), 0.25)).unwrap();
        assert_eq!(user_vector(&e, "u1").to_vec(), vec![0.25; 3]);
        assert_eq!(user_vector(&e, "ghost").to_vec(), vec![0.0; 3]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nodes.vec");
        save_node_embedding(&e, &path).unwrap();
        assert_eq!(load_node_embedding(&path).unwrap(), e);
    }
}
