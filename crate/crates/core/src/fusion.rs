//! Late fusion of up to four feature blocks followed by
//! dropout -> dense(ReLU) -> dropout -> dense -> softmax.

use std::borrow::Cow;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::StanceLabel;
use crate::embedfeat::{EncodedSequence, LookupTable, SequenceMatrix};
use crate::experiment::f_avg;
use crate::heads::{Head, HeadCache, HeadConfig};
use crate::nn::{softmax, Adam, Dense, Param, Parameterized};
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Feature sources, in canonical concatenation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockSlot {
    EmbedHead,
    SvHead,
    FreqPca,
    GraphUser,
}

impl BlockSlot {
    pub const ALL: [BlockSlot; 4] = [BlockSlot::EmbedHead, BlockSlot::SvHead, BlockSlot::FreqPca, BlockSlot::GraphUser];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BlockSlot::EmbedHead => "embed_head",
            BlockSlot::SvHead => "sv_head",
            BlockSlot::FreqPca => "freq_pca",
            BlockSlot::GraphUser => "graph_user",
        }
    }

    /// Sequence slots feed a head; the others are used as-is.
    pub fn is_sequence(self) -> bool {
        matches!(self, BlockSlot::EmbedHead | BlockSlot::SvHead)
    }

    /// The reduced frequency vector may also be read by a head as a
    /// `k x 1` sequence.
    pub fn accepts(self, spec: &SlotSpec) -> bool {
        match spec {
            SlotSpec::Sequence { .. } => self.is_sequence() || self == BlockSlot::FreqPca,
            SlotSpec::Vector { .. } => !self.is_sequence(),
        }
    }
}

impl fmt::Display for BlockSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BlockSlot {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BlockSlot::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown block `{s}` (expected embed_head, sv_head, freq_pca or graph_user)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { learning_rate: 1e-3, batch_size: 32, max_epochs: 50, patience: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub active_blocks: Vec<BlockSlot>,
    pub dropout_rate: f64,
    pub hidden_units: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            active_blocks: BlockSlot::ALL.to_vec(),
            dropout_rate: 0.2,
            hidden_units: 128,
            optimizer: OptimizerConfig::default(),
            seed: 0,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.active_blocks.is_empty() {
            return Err(Error::invalid("at least one feature block must be active"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid(format!("dropout_rate must be in [0, 1), got {}", self.dropout_rate)));
        }
        if self.hidden_units == 0 {
            return Err(Error::invalid("hidden_units must be at least 1"));
        }
        let o = &self.optimizer;
        if !(o.learning_rate >= 0.0 && o.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("bad learning rate {}", o.learning_rate)));
        }
        if o.batch_size == 0 || o.max_epochs == 0 {
            return Err(Error::invalid("batch_size and max_epochs must be at least 1"));
        }
        Ok(())
    }

    /// Active blocks, deduplicated, in canonical order.
    pub fn ordered_blocks(&self) -> Vec<BlockSlot> {
        let mut b = self.active_blocks.clone();
        b.sort();
        b.dedup();
        b
    }
}

/// Shape of one active block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotSpec {
    Sequence { head: HeadConfig, in_dim: usize, len: usize },
    Vector { dim: usize },
}

/// One block value for one instance.
#[derive(Debug, Clone)]
pub enum BlockValue {
    Vector(Array1<f64>),
    Sequence(SequenceMatrix),
    /// Token ids resolved against a shared table when used.
    Encoded(Arc<LookupTable>, EncodedSequence),
}

impl BlockValue {
    fn sequence(&self) -> Option<Cow<'_, SequenceMatrix>> {
        match self {
            BlockValue::Sequence(m) => Some(Cow::Borrowed(m)),
            BlockValue::Encoded(t, e) => Some(Cow::Owned(t.materialize(e))),
            BlockValue::Vector(_) => None,
        }
    }
}

/// All block values of one instance, indexed by slot.
#[derive(Debug, Clone, Default)]
pub struct FusionInput {
    slots: [Option<BlockValue>; 4],
}

impl FusionInput {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, slot: BlockSlot, value: BlockValue) -> Self {
        self.slots[slot.index()] = Some(value);
        self
    }

    pub fn set(&mut self, slot: BlockSlot, value: BlockValue) {
        self.slots[slot.index()] = Some(value);
    }

    pub fn get(&self, slot: BlockSlot) -> Option<&BlockValue> {
        self.slots[slot.index()].as_ref()
    }
}

/// Concatenates vectors in canonical slot order, whatever order they are
/// given in. Each block must match its declared dim; every declared slot
/// must be present exactly once.
pub fn assemble(blocks: &[(BlockSlot, ArrayView1<f64>)], declared: &[(BlockSlot, usize)]) -> Result<Array1<f64>> {
    let mut declared = declared.to_vec();
    declared.sort_by_key(|&(s, _)| s);
    if blocks.len() != declared.len() {
        return Err(Error::DimensionMismatch { expected: declared.len(), actual: blocks.len() });
    }
    let total: usize = declared.iter().map(|&(_, d)| d).sum();
    let mut out = Array1::zeros(total);
    let mut offset = 0;
    for &(slot, dim) in &declared {
        let mut found = blocks.iter().filter(|(s, _)| *s == slot);
        let v = found.next().ok_or_else(|| Error::invalid(format!("block {slot} missing")))?;
        if found.next().is_some() {
            return Err(Error::invalid(format!("block {slot} given twice")));
        }
        if v.1.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: v.1.len() });
        }
        out.slice_mut(s![offset..offset + dim]).assign(&v.1);
        offset += dim;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probs: [f64; 3],
    pub label: StanceLabel,
}

impl Prediction {
    /// Argmax with ties resolved towards the earlier class
    /// (AGAINST, FAVOR, NONE).
    pub fn from_probs(probs: [f64; 3]) -> Self {
        let mut best = 0;
        for k in 1..3 {
            if probs[k] > probs[best] {
                best = k;
            }
        }
        Prediction { probs, label: StanceLabel::from_index(best).expect("three classes") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training cross-entropy (with dropout active).
    pub loss: f64,
    pub eval_f_avg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Number of epochs behind the kept parameters.
    pub best_epochs: usize,
    pub best_eval_f_avg: Option<f64>,
    pub stopped_early: bool,
}

struct Cache {
    heads: Vec<Option<HeadCache>>,
    x: Array1<f64>,
    x_mask: Option<Array1<f64>>,
    pre: Array1<f64>,
    h: Array1<f64>,
    h_mask: Option<Array1<f64>>,
    probs: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    config: FusionConfig,
    layout: Vec<(BlockSlot, SlotSpec)>,
    heads: Vec<Option<Head>>,
    dims: Vec<usize>,
    hidden: Dense,
    output: Dense,
}

impl FusionModel {
    /// `layout` gives the shape of every active block; the output layer
    /// starts at zero so initial predictions are uniform.
    pub fn new(config: FusionConfig, layout: &[(BlockSlot, SlotSpec)]) -> Result<Self> {
        config.validate()?;
        let blocks = config.ordered_blocks();
        let mut ordered = Vec::with_capacity(blocks.len());
        for &slot in &blocks {
            let spec = layout
                .iter()
                .find(|(s, _)| *s == slot)
                .ok_or_else(|| Error::invalid(format!("no shape given for active block {slot}")))?;
            ordered.push(spec.clone());
        }
        if layout.len() != blocks.len() {
            return Err(Error::invalid("layout lists blocks that are not active"));
        }
        let mut heads = Vec::with_capacity(ordered.len());
        let mut dims = Vec::with_capacity(ordered.len());
        for (i, (slot, spec)) in ordered.iter().enumerate() {
            match (slot.accepts(spec), spec) {
                (true, SlotSpec::Sequence { head, in_dim, len }) => {
                    let cfg = HeadConfig { seed: rng::derive(config.seed, 100 + i as u64), ..head.clone() };
                    let h = Head::new(&cfg, *in_dim, *len)?;
                    dims.push(h.output_dim());
                    heads.push(Some(h));
                }
                (true, SlotSpec::Vector { dim }) if *dim > 0 => {
                    dims.push(*dim);
                    heads.push(None);
                }
                _ => return Err(Error::invalid(format!("block {slot} has an incompatible shape"))),
            }
        }
        let mut r = rng::stream(config.seed, 0);
        let input: usize = dims.iter().sum();
        let hidden = Dense::new(&mut r, input, config.hidden_units);
        let output = Dense::zeros(config.hidden_units, 3);
        Ok(FusionModel { config, layout: ordered, heads, dims, hidden, output })
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    pub fn layout(&self) -> &[(BlockSlot, SlotSpec)] {
        &self.layout
    }

    pub fn input_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Output widths of the active blocks, in canonical order.
    pub fn block_dims(&self) -> Vec<(BlockSlot, usize)> {
        self.layout.iter().map(|(s, _)| *s).zip(self.dims.iter().copied()).collect()
    }

    fn run(&self, x: &FusionInput, dropout: Option<&mut Rng>) -> Result<Cache> {
        let mut parts = Vec::with_capacity(self.layout.len());
        let mut caches = Vec::with_capacity(self.layout.len());
        for ((slot, _), head) in self.layout.iter().zip(&self.heads) {
            let value = x.get(*slot).ok_or_else(|| Error::invalid(format!("instance lacks block {slot}")))?;
            match head {
                Some(h) => {
                    let seq = value.sequence().ok_or_else(|| Error::invalid(format!("block {slot} must be a sequence")))?;
                    let (out, cache) = h.forward(&seq)?;
                    parts.push((*slot, out.vector));
                    caches.push(Some(cache));
                }
                None => {
                    let BlockValue::Vector(v) = value else {
                        return Err(Error::invalid(format!("block {slot} must be a vector")));
                    };
                    parts.push((*slot, v.clone()));
                    caches.push(None);
                }
            }
        }
        let views: Vec<_> = parts.iter().map(|(s, v)| (*s, v.view())).collect();
        let mut xv = assemble(&views, &self.block_dims())?;
        let p = self.config.dropout_rate;
        let (x_mask, h_mask) = match dropout {
            Some(r) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                let mut draw = |n: usize| Array1::from_shape_simple_fn(n, || if r.random::<f64>() < p { 0.0 } else { keep });
                let xm = draw(xv.len());
                (Some(xm), Some(draw(self.config.hidden_units)))
            }
            _ => (None, None),
        };
        if let Some(m) = &x_mask {
            xv *= m;
        }
        let pre = self.hidden.forward(xv.view());
        let mut h = pre.mapv(crate::nn::relu);
        if let Some(m) = &h_mask {
            h *= m;
        }
        let logits = self.output.forward(h.view());
        let probs = softmax(logits.view());
        Ok(Cache { heads: caches, x: xv, x_mask, pre, h, h_mask, probs })
    }

    /// Inference: dropout disabled, deterministic.
    pub fn predict(&self, x: &FusionInput) -> Result<Prediction> {
        let c = self.run(x, None)?;
        Ok(Prediction::from_probs([c.probs[0], c.probs[1], c.probs[2]]))
    }

    pub fn predict_all(&self, xs: &[FusionInput]) -> Result<Vec<Prediction>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    /// Cross-entropy in inference mode.
    pub fn loss(&self, x: &FusionInput, label: StanceLabel) -> Result<f64> {
        let c = self.run(x, None)?;
        Ok(-c.probs[label.index()].ln())
    }

    /// Forward and backward for one instance, accumulating gradients.
    /// Dropout is applied when `dropout` is given. Returns the loss.
    pub fn accumulate_gradients(&mut self, x: &FusionInput, label: StanceLabel, dropout: Option<&mut Rng>) -> Result<f64> {
        let c = self.run(x, dropout)?;
        let loss = -c.probs[label.index()].ln();
        let mut d_logits = c.probs.clone();
        d_logits[label.index()] -= 1.0;
        let mut d_h = self.output.backward(c.h.view(), d_logits.view());
        if let Some(m) = &c.h_mask {
            d_h *= m;
        }
        let d_pre = d_h * &c.pre.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let mut d_x = self.hidden.backward(c.x.view(), d_pre.view());
        if let Some(m) = &c.x_mask {
            d_x *= m;
        }
        let mut offset = 0;
        for ((head, cache), &dim) in self.heads.iter_mut().zip(&c.heads).zip(&self.dims) {
            if let (Some(h), Some(cache)) = (head, cache) {
                h.backward(cache, d_x.slice(s![offset..offset + dim]));
            }
            offset += dim;
        }
        Ok(loss)
    }

    fn epoch(&mut self, xs: &[FusionInput], ys: &[StanceLabel], adam: &mut Adam, epoch: usize) -> Result<f64> {
        let seed = self.config.seed;
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.shuffle(&mut rng::stream(seed, 1_000 + epoch as u64));
        let mut drop_rng = rng::stream(seed, 2_000_000 + epoch as u64);
        let batch = self.config.optimizer.batch_size;
        let mut total = 0.0;
        for (b, chunk) in order.chunks(batch).enumerate() {
            self.zero_grad();
            let mut batch_loss = 0.0;
            for &i in chunk {
                batch_loss += self.accumulate_gradients(&xs[i], ys[i], Some(&mut drop_rng))?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b, value: batch_loss });
            }
            adam.step(self.params_mut(), 1.0 / chunk.len() as f64);
            total += batch_loss;
        }
        Ok(total / xs.len() as f64)
    }

    fn check_data(xs: &[FusionInput], ys: &[StanceLabel]) -> Result<()> {
        if xs.is_empty() {
            return Err(Error::EmptyInput("no training instances".into()));
        }
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), actual: ys.len() });
        }
        Ok(())
    }

    /// Mini-batch Adam with early stopping on eval f-avg. Parameters from
    /// the best eval epoch are kept. Without eval data, trains for
    /// `max_epochs`.
    pub fn train(
        &mut self,
        xs: &[FusionInput],
        ys: &[StanceLabel],
        eval: Option<(&[FusionInput], &[StanceLabel])>,
    ) -> Result<TrainHistory> {
        Self::check_data(xs, ys)?;
        let Some((ex, ey)) = eval.filter(|(ex, _)| !ex.is_empty()) else {
            return self.train_epochs(xs, ys, self.config.optimizer.max_epochs);
        };
        if ex.len() != ey.len() {
            return Err(Error::DimensionMismatch { expected: ex.len(), actual: ey.len() });
        }
        let opt = self.config.optimizer.clone();
        let mut adam = Adam::new(opt.learning_rate);
        let mut history = TrainHistory::default();
        let mut best: Option<(f64, FusionModel)> = None;
        let mut since = 0;
        for epoch in 0..opt.max_epochs {
            let loss = self.epoch(xs, ys, &mut adam, epoch)?;
            let preds: Vec<StanceLabel> = self.predict_all(ex)?.iter().map(|p| p.label).collect();
            let score = f_avg(&preds, ey)?;
            history.epochs.push(EpochRecord { epoch, loss, eval_f_avg: Some(score) });
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, self.clone()));
                history.best_epochs = epoch + 1;
                history.best_eval_f_avg = Some(score);
                since = 0;
            } else {
                since += 1;
                if since >= opt.patience {
                    history.stopped_early = true;
                    break;
                }
            }
        }
        if let Some((_, m)) = best {
            *self = m;
        }
        Ok(history)
    }

    /// Trains for exactly `epochs` epochs with no evaluation.
    pub fn train_epochs(&mut self, xs: &[FusionInput], ys: &[StanceLabel], epochs: usize) -> Result<TrainHistory> {
        Self::check_data(xs, ys)?;
        let mut adam = Adam::new(self.config.optimizer.learning_rate);
        let mut history = TrainHistory::default();
        for epoch in 0..epochs {
            let loss = self.epoch(xs, ys, &mut adam, epoch)?;
            history.epochs.push(EpochRecord { epoch, loss, eval_f_avg: None });
        }
        history.best_epochs = epochs;
        Ok(history)
    }
}

impl Parameterized for FusionModel {
    fn params(&self) -> Vec<&Param> {
        let mut p: Vec<&Param> = self.heads.iter().flatten().flat_map(|h| h.params()).collect();
        p.extend(self.hidden.params());
        p.extend(self.output.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p: Vec<&mut Param> = self.heads.iter_mut().flatten().flat_map(|h| h.params_mut()).collect();
        p.extend(self.hidden.params_mut());
        p.extend(self.output.params_mut());
        p
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"SLCK";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: FusionConfig,
    layout: Vec<(BlockSlot, SlotSpec)>,
}

/// Single file: magic, version, JSON header length and body, then every
/// parameter as `rows cols` (u64) and little-endian f64 values.
pub fn save_checkpoint(model: &FusionModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let header = serde_json::to_vec(&CheckpointHeader { config: model.config.clone(), layout: model.layout.clone() })?;
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(header.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&header).map_err(io)?;
    for p in model.params() {
        let (r, c) = p.value.dim();
        w.write_all(&(r as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&(c as u64).to_le_bytes()).map_err(io)?;
        for v in p.value.iter() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<FusionModel> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let bad = |m: &str| Error::invalid(format!("{}: {m}", path.display()));
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b).map_err(io)?;
    if u32::from_le_bytes(u32b) != CHECKPOINT_VERSION {
        return Err(bad("unsupported checkpoint version"));
    }
    let mut u64b = [0u8; 8];
    let mut read_u64 = |r: &mut BufReader<File>| -> Result<u64> {
        r.read_exact(&mut u64b).map_err(io)?;
        Ok(u64::from_le_bytes(u64b))
    };
    let n = read_u64(&mut r)? as usize;
    let mut header = vec![0u8; n];
    r.read_exact(&mut header).map_err(io)?;
    let header: CheckpointHeader = serde_json::from_slice(&header)?;
    let mut model = FusionModel::new(header.config, &header.layout)?;
    for p in model.params_mut() {
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        if (rows, cols) != p.value.dim() {
            return Err(bad("parameter shape does not match the stored config"));
        }
        let mut buf = vec![0u8; rows * cols * 8];
        r.read_exact(&mut buf).map_err(io)?;
        let vals: Vec<f64> = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        p.value = Array2::from_shape_vec((rows, cols), vals).expect("shape checked");
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(io)?;
    if !rest.is_empty() {
        return Err(bad("trailing bytes after parameters"));
    }
    Ok(model)
}

/// CSV with header `id,against_p,favor_p,none_p,label`.
pub fn write_predictions(path: impl AsRef<Path>, ids: &[String], preds: &[Prediction]) -> Result<()> {
    let path = path.as_ref();
    if ids.len() != preds.len() {
        return Err(Error::DimensionMismatch { expected: ids.len(), actual: preds.len() });
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "against_p", "favor_p", "none_p", "label"])?;
    for (id, p) in ids.iter().zip(preds) {
        w.write_record([
            id.clone(),
            format!("{:.6}", p.probs[0]),
            format!("{:.6}", p.probs[1]),
            format!("{:.6}", p.probs[2]),
            p.label.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::HeadKind;
    use crate::nn::gradcheck::max_param_error;

    fn vec_input(v: &[f64]) -> FusionInput {
        FusionInput::new().with(BlockSlot::FreqPca, BlockValue::Vector(Array1::from(v.to_vec())))
    }

    fn freq_model(dim: usize, cfg: FusionConfig) -> FusionModel {
        let cfg = FusionConfig { active_blocks: vec![BlockSlot::FreqPca], ..cfg };
        FusionModel::new(cfg, &[(BlockSlot::FreqPca, SlotSpec::Vector { dim })]).unwrap()
    }

    fn toy(n: usize, dim: usize, seed: u64) -> (Vec<FusionInput>, Vec<StanceLabel>) {
        let mut r = rng::seeded(seed);
        let xs = (0..n).map(|_| vec_input(&(0..dim).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<_>>())).collect();
        let ys = (0..n).map(|i| StanceLabel::ALL[i % 3]).collect();
        (xs, ys)
    }

    #[test]
    fn assemble_orders_and_checks() {
        let a = Array1::from(vec![1.0, 2.0]);
        let b = Array1::from(vec![3.0]);
        let declared = [(BlockSlot::GraphUser, 1), (BlockSlot::EmbedHead, 2)];
        let x = assemble(&[(BlockSlot::GraphUser, b.view()), (BlockSlot::EmbedHead, a.view())], &declared).unwrap();
        let y = assemble(&[(BlockSlot::EmbedHead, a.view()), (BlockSlot::GraphUser, b.view())], &declared).unwrap();
        assert_eq!(x.to_vec(), vec![1.0, 2.0, 3.0]);
        assert_eq!(x, y);
        assert!(assemble(&[(BlockSlot::EmbedHead, b.view()), (BlockSlot::GraphUser, b.view())], &declared).is_err());

        let dims = [(BlockSlot::EmbedHead, 128), (BlockSlot::SvHead, 100), (BlockSlot::FreqPca, 100), (BlockSlot::GraphUser, 128)];
        let parts: Vec<Array1<f64>> = dims.iter().map(|&(_, d)| Array1::zeros(d)).collect();
        let views: Vec<_> = dims.iter().zip(&parts).map(|(&(s, _), p)| (s, p.view())).collect();
        assert_eq!(assemble(&views, &dims).unwrap().len(), 456);
    }

    #[test]
    fn argmax_and_ties() {
        assert_eq!(Prediction::from_probs([0.2, 0.5, 0.3]).label, StanceLabel::Favor);
        assert_eq!(Prediction::from_probs([0.4, 0.4, 0.2]).label, StanceLabel::Against);
        assert_eq!(Prediction::from_probs([0.2, 0.4, 0.4]).label, StanceLabel::Favor);
    }

    #[test]
    fn initial_loss_is_ln3_and_inference_is_deterministic() {
        let m = freq_model(4, FusionConfig::default());
        let x = vec_input(&[0.1, -0.3, 0.5, 2.0]);
        assert!((m.loss(&x, StanceLabel::None).unwrap() - 3f64.ln()).abs() < 1e-12);
        assert_eq!(m.predict(&x).unwrap(), m.predict(&x).unwrap());
        assert!(m.predict(&vec_input(&[1.0])).is_err());
    }

    #[test]
    fn dropout_rate_does_not_affect_inference() {
        let (xs, ys) = toy(12, 3, 1);
        let mut a = freq_model(3, FusionConfig { dropout_rate: 0.0, ..Default::default() });
        a.train_epochs(&xs, &ys, 3).unwrap();
        let mut b = a.clone();
        b.config.dropout_rate = 0.7;
        for x in &xs {
            assert_eq!(a.predict(x).unwrap(), b.predict(x).unwrap());
        }
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let (xs, ys) = toy(20, 3, 2);
        let cfg = FusionConfig { optimizer: OptimizerConfig { learning_rate: 0.0, ..Default::default() }, ..Default::default() };
        let mut m = freq_model(3, cfg);
        let before = m.clone();
        m.train_epochs(&xs, &ys, 4).unwrap();
        for (p, q) in m.params().iter().zip(before.params()) {
            assert_eq!(p.value, q.value);
        }
    }

    #[test]
    fn overfits_thirty_points() {
        let (xs, ys) = toy(30, 20, 3);
        let mut m = freq_model(20, FusionConfig::default());
        m.train_epochs(&xs, &ys, 200).unwrap();
        let correct = xs.iter().zip(&ys).filter(|(x, y)| m.predict(x).unwrap().label == **y).count();
        assert!(correct as f64 / 30.0 >= 0.95, "{correct}/30");
    }

    #[test]
    fn early_stopping_keeps_best_epoch() {
        let (xs, ys) = toy(30, 4, 4);
        let (ex, ey) = toy(15, 4, 5);
        let cfg = FusionConfig { optimizer: OptimizerConfig { max_epochs: 40, patience: 3, ..Default::default() }, ..Default::default() };
        let mut m = freq_model(4, cfg);
        let h = m.train(&xs, &ys, Some((&ex, &ey))).unwrap();
        let best = h.epochs.iter().filter_map(|e| e.eval_f_avg).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(h.best_eval_f_avg, Some(best));
        let preds: Vec<_> = m.predict_all(&ex).unwrap().iter().map(|p| p.label).collect();
        assert_eq!(f_avg(&preds, &ey).unwrap(), best);
        if h.stopped_early {
            assert_eq!(h.epochs.len(), h.best_epochs + 3);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (xs, ys) = toy(25, 3, 6);
        let run = || {
            let mut m = freq_model(3, FusionConfig { seed: 9, ..Default::default() });
            let h = m.train_epochs(&xs, &ys, 3).unwrap();
            (m, h)
        };
        assert_eq!(run(), run());
    }

    fn full_model() -> (FusionModel, FusionInput) {
        let head = HeadConfig {
            kind: HeadKind::Cnn2dMulti,
            filter_sizes_2d: vec![1, 2],
            filters_per_head: 2,
            init_std: 0.5,
            ..Default::default()
        };
        let sv = HeadConfig { kind: HeadKind::Bilstm, lstm_units: 2, ..Default::default() };
        let layout = [
            (BlockSlot::EmbedHead, SlotSpec::Sequence { head, in_dim: 3, len: 4 }),
            (BlockSlot::SvHead, SlotSpec::Sequence { head: sv, in_dim: 2, len: 4 }),
            (BlockSlot::FreqPca, SlotSpec::Vector { dim: 2 }),
            (BlockSlot::GraphUser, SlotSpec::Vector { dim: 2 }),
        ];
        let cfg = FusionConfig { hidden_units: 5, ..Default::default() };
        let mut m = FusionModel::new(cfg, &layout).unwrap();
        let mut r = rng::seeded(7);
        for p in m.params_mut() {
            p.value.mapv_inplace(|_| r.random_range(-0.7..0.7));
        }
        let mut seq = |d: usize| SequenceMatrix::unpadded(Array2::from_shape_simple_fn((4, d), || r.random_range(-1.0..1.0)));
        let x = FusionInput::new()
            .with(BlockSlot::EmbedHead, BlockValue::Sequence(seq(3)))
            .with(BlockSlot::SvHead, BlockValue::Sequence(seq(2)))
            .with(BlockSlot::FreqPca, BlockValue::Vector(Array1::from(vec![0.3, -0.8])))
            .with(BlockSlot::GraphUser, BlockValue::Vector(Array1::from(vec![0.5, 0.1])));
        (m, x)
    }

    #[test]
    fn fused_gradient_check() {
        let (mut m, x) = full_model();
        assert_eq!(m.input_dim(), 4 + 8 + 2 + 2);
        m.zero_grad();
        m.accumulate_gradients(&x, StanceLabel::Favor, None).unwrap();
        let err = max_param_error(&mut m, |m| m.loss(&x, StanceLabel::Favor).unwrap());
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let (m, x) = full_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&m, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap());
        std::fs::write(&path, b"nope").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn predictions_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let p = Prediction::from_probs([0.2, 0.5, 0.3]);
        write_predictions(&path, &["t1".into()], &[p]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "id,against_p,favor_p,none_p,label\nt1,0.200000,0.500000,0.300000,FAVOR\n");
    }
}
