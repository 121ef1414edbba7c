//! Neural sequence heads mapping an `L x d` token matrix to a fixed-size
//! vector. Every head exposes a forward pass with a cache and a backward
//! pass that accumulates parameter gradients and returns `dL/dx`.

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::embedfeat::SequenceMatrix;
use crate::nn::{Attention, AttentionCache, BiLstm, BiLstmCache, ConvCache, Param, Parameterized, TimeConv};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Cnn1d,
    Cnn2dMulti,
    Bilstm,
    AttBilstm,
}

impl HeadKind {
    pub const ALL: [HeadKind; 4] = [HeadKind::Cnn2dMulti, HeadKind::Cnn1d, HeadKind::Bilstm, HeadKind::AttBilstm];

    /// Name used in settings strings.
    pub fn settings_name(self) -> &'static str {
        match self {
            HeadKind::Cnn1d => "Conv1D",
            HeadKind::Cnn2dMulti => "Conv2D",
            HeadKind::Bilstm => "BiLSTM",
            HeadKind::AttBilstm => "AttLSTM",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Cnn1d => "cnn1d",
            HeadKind::Cnn2dMulti => "cnn2d_multi",
            HeadKind::Bilstm => "bilstm",
            HeadKind::AttBilstm => "att_bilstm",
        }
    }

    pub fn from_settings_name(name: &str) -> Option<Self> {
        HeadKind::ALL.into_iter().find(|k| k.settings_name().eq_ignore_ascii_case(name))
    }

    pub fn is_recurrent(self) -> bool {
        matches!(self, HeadKind::Bilstm | HeadKind::AttBilstm)
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HeadKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .or_else(|| HeadKind::from_settings_name(s))
            .ok_or_else(|| Error::invalid(format!("unknown head `{s}` (expected Conv2D, Conv1D, BiLSTM or AttLSTM)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub kind: HeadKind,
    pub filters_1d: usize,
    pub kernel_1d: usize,
    pub pool_1d: usize,
    pub filter_sizes_2d: Vec<usize>,
    pub filters_per_head: usize,
    pub lstm_units: usize,
    pub lstm_units_2: usize,
    /// Width of the additive-attention projection.
    pub attention_units: usize,
    /// Std of the normal initializer for convolution kernels.
    pub init_std: f64,
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            kind: HeadKind::Cnn2dMulti,
            filters_1d: 32,
            kernel_1d: 5,
            pool_1d: 2,
            filter_sizes_2d: vec![1, 2, 3, 5],
            filters_per_head: 32,
            lstm_units: 64,
            lstm_units_2: 128,
            attention_units: 128,
            init_std: 0.05,
            seed: 0,
        }
    }
}

impl HeadConfig {
    pub fn new(kind: HeadKind) -> Self {
        HeadConfig { kind, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("filters_1d", self.filters_1d),
            ("kernel_1d", self.kernel_1d),
            ("pool_1d", self.pool_1d),
            ("filters_per_head", self.filters_per_head),
            ("lstm_units", self.lstm_units),
            ("lstm_units_2", self.lstm_units_2),
            ("attention_units", self.attention_units),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be at least 1")));
        }
        if self.filter_sizes_2d.is_empty() || self.filter_sizes_2d.contains(&0) {
            return Err(Error::invalid("filter_sizes_2d must be non-empty positive sizes"));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(Error::invalid(format!("init_std must be positive, got {}", self.init_std)));
        }
        Ok(())
    }

    /// Shortest input the head accepts.
    pub fn min_len(&self) -> usize {
        match self.kind {
            HeadKind::Cnn1d => self.kernel_1d + self.pool_1d - 1,
            HeadKind::Cnn2dMulti => self.filter_sizes_2d.iter().copied().max().unwrap_or(1),
            HeadKind::Bilstm | HeadKind::AttBilstm => 1,
        }
    }

    /// Output width for inputs of length `len`.
    pub fn output_dim(&self, len: usize) -> Result<usize> {
        if len < self.min_len() {
            return Err(Error::SequenceTooShort { len, required: self.min_len() });
        }
        Ok(match self.kind {
            HeadKind::Cnn1d => self.filters_1d * ((len - self.kernel_1d + 1) / self.pool_1d),
            HeadKind::Cnn2dMulti => self.filters_per_head * self.filter_sizes_2d.len(),
            HeadKind::Bilstm => 4 * self.lstm_units,
            HeadKind::AttBilstm => 2 * self.lstm_units_2,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    pub vector: Array1<f64>,
}

impl HeadOutput {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// A head with its parameters, built for a fixed input width and length.
#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Cnn1d { conv: TimeConv, pool: usize, len: usize },
    Cnn2dMulti { convs: Vec<TimeConv> },
    Bilstm { lstm: BiLstm },
    AttBilstm { first: BiLstm, second: BiLstm, attention: Attention },
}

#[derive(Debug, Clone)]
pub enum HeadCache {
    Cnn1d { conv: ConvCache, argmax: Vec<usize>, len: usize },
    Cnn2dMulti { convs: Vec<ConvCache>, argmax: Vec<Vec<usize>>, len: usize },
    Bilstm { lstm: BiLstmCache, argmax: Vec<usize>, steps: Vec<usize>, len: usize },
    AttBilstm { first: BiLstmCache, second: BiLstmCache, attention: AttentionCache, steps: Vec<usize>, len: usize },
}

impl HeadCache {
    /// Attention weights over unmasked steps, for attention heads.
    pub fn attention_weights(&self) -> Option<&Array1<f64>> {
        match self {
            HeadCache::AttBilstm { attention, .. } => Some(&attention.alpha),
            _ => None,
        }
    }
}

impl Head {
    /// Initializes parameters from `cfg.seed`. `len` is the padded input
    /// length, which fixes the output width of the 1-D CNN.
    pub fn new(cfg: &HeadConfig, in_dim: usize, len: usize) -> Result<Head> {
        cfg.validate()?;
        if in_dim == 0 {
            return Err(Error::invalid("input dim must be at least 1"));
        }
        cfg.output_dim(len)?;
        let mut rng = rng::seeded(cfg.seed);
        Ok(match cfg.kind {
            HeadKind::Cnn1d => Head::Cnn1d {
                conv: TimeConv::new(&mut rng, cfg.kernel_1d, in_dim, cfg.filters_1d, cfg.init_std),
                pool: cfg.pool_1d,
                len,
            },
            HeadKind::Cnn2dMulti => Head::Cnn2dMulti {
                convs: cfg
                    .filter_sizes_2d
                    .iter()
                    .map(|&f| TimeConv::new(&mut rng, f, in_dim, cfg.filters_per_head, cfg.init_std))
                    .collect(),
            },
            HeadKind::Bilstm => Head::Bilstm { lstm: BiLstm::new(&mut rng, in_dim, cfg.lstm_units) },
            HeadKind::AttBilstm => {
                let first = BiLstm::new(&mut rng, in_dim, cfg.lstm_units);
                let second = BiLstm::new(&mut rng, first.output_dim(), cfg.lstm_units_2);
                let attention = Attention::new(&mut rng, second.output_dim(), cfg.attention_units);
                Head::AttBilstm { first, second, attention }
            }
        })
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            Head::Cnn1d { .. } => HeadKind::Cnn1d,
            Head::Cnn2dMulti { .. } => HeadKind::Cnn2dMulti,
            Head::Bilstm { .. } => HeadKind::Bilstm,
            Head::AttBilstm { .. } => HeadKind::AttBilstm,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Head::Cnn1d { conv, .. } => conv.in_dim,
            Head::Cnn2dMulti { convs } => convs[0].in_dim,
            Head::Bilstm { lstm } => lstm.fwd.input_dim(),
            Head::AttBilstm { first, .. } => first.fwd.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Head::Cnn1d { conv, pool, len } => conv.filters() * (conv.positions(*len) / pool),
            Head::Cnn2dMulti { convs } => convs.iter().map(TimeConv::filters).sum(),
            Head::Bilstm { lstm } => 2 * lstm.output_dim(),
            Head::AttBilstm { second, .. } => second.output_dim(),
        }
    }

    fn check_input(&self, x: &SequenceMatrix) -> Result<()> {
        if x.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: x.dim() });
        }
        match self {
            Head::Cnn1d { len, .. } if x.len() != *len => {
                Err(Error::DimensionMismatch { expected: *len, actual: x.len() })
            }
            Head::Cnn2dMulti { convs } => {
                let need = convs.iter().map(|c| c.width).max().unwrap_or(1);
                if x.len() < need {
                    Err(Error::SequenceTooShort { len: x.len(), required: need })
                } else {
                    Ok(())
                }
            }
            Head::Bilstm { .. } | Head::AttBilstm { .. } if x.active_steps().is_empty() => Err(Error::FullyMasked),
            _ => Ok(()),
        }
    }

    pub fn extract(&self, x: &SequenceMatrix) -> Result<HeadOutput> {
        self.forward(x).map(|(out, _)| out)
    }

    /// CNN heads convolve the full padded matrix; recurrent heads drop
    /// masked steps first.
    pub fn forward(&self, x: &SequenceMatrix) -> Result<(HeadOutput, HeadCache)> {
        self.check_input(x)?;
        let len = x.len();
        Ok(match self {
            Head::Cnn1d { conv, pool, .. } => {
                let c = conv.forward(x.rows.view());
                let (vector, argmax) = max_pool(&c.out, *pool);
                (HeadOutput { vector }, HeadCache::Cnn1d { conv: c, argmax, len })
            }
            Head::Cnn2dMulti { convs } => {
                let mut parts = Vec::with_capacity(convs.len());
                let mut caches = Vec::with_capacity(convs.len());
                let mut argmaxes = Vec::with_capacity(convs.len());
                for conv in convs {
                    let c = conv.forward(x.rows.view());
                    let (v, a) = max_pool(&c.out, c.out.nrows());
                    parts.push(v);
                    argmaxes.push(a);
                    caches.push(c);
                }
                let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
                let vector = concatenate(Axis(0), &views).expect("1-d parts");
                (HeadOutput { vector }, HeadCache::Cnn2dMulti { convs: caches, argmax: argmaxes, len })
            }
            Head::Bilstm { lstm } => {
                let steps = x.active_steps();
                let xs = x.rows.select(Axis(0), &steps);
                let c = lstm.forward(xs.view());
                let (max, argmax) = max_pool(&c.out, c.out.nrows());
                let mean = c.out.mean_axis(Axis(0)).expect("non-empty");
                let vector = concatenate(Axis(0), &[max.view(), mean.view()]).expect("1-d parts");
                (HeadOutput { vector }, HeadCache::Bilstm { lstm: c, argmax, steps, len })
            }
            Head::AttBilstm { first, second, attention } => {
                let steps = x.active_steps();
                let xs = x.rows.select(Axis(0), &steps);
                let c1 = first.forward(xs.view());
                let c2 = second.forward(c1.out.view());
                let ca = attention.forward(c2.out.view());
                let vector = ca.out.clone();
                (HeadOutput { vector }, HeadCache::AttBilstm { first: c1, second: c2, attention: ca, steps, len })
            }
        })
    }

    /// Accumulates parameter gradients for `d_out = dL/d(output)` and
    /// returns `dL/dx` (zero on masked rows for recurrent heads).
    pub fn backward(&mut self, cache: &HeadCache, d_out: ArrayView1<f64>) -> Array2<f64> {
        match (self, cache) {
            (Head::Cnn1d { conv, pool, .. }, HeadCache::Cnn1d { conv: c, argmax, len }) => {
                let d = unpool(&c.out, argmax, d_out, *pool);
                conv.backward(c, d.view(), *len)
            }
            (Head::Cnn2dMulti { convs }, HeadCache::Cnn2dMulti { convs: cs, argmax, len }) => {
                let mut dx = Array2::zeros((*len, convs[0].in_dim));
                let mut offset = 0;
                for ((conv, c), a) in convs.iter_mut().zip(cs).zip(argmax) {
                    let f = conv.filters();
                    let d = unpool(&c.out, a, d_out.slice(s![offset..offset + f]), c.out.nrows());
                    dx += &conv.backward(c, d.view(), *len);
                    offset += f;
                }
                dx
            }
            (Head::Bilstm { lstm }, HeadCache::Bilstm { lstm: c, argmax, steps, len }) => {
                let width = c.out.ncols();
                let t = c.out.nrows();
                let mut d = unpool(&c.out, argmax, d_out.slice(s![..width]), t);
                let d_mean = d_out.slice(s![width..]).mapv(|g| g / t as f64);
                d += &d_mean.insert_axis(Axis(0));
                let dxs = lstm.backward(c, d.view());
                scatter(&dxs, steps, *len)
            }
            (
                Head::AttBilstm { first, second, attention },
                HeadCache::AttBilstm { first: c1, second: c2, attention: ca, steps, len },
            ) => {
                let dh2 = attention.backward(ca, d_out);
                let dh1 = second.backward(c2, dh2.view());
                let dxs = first.backward(c1, dh1.view());
                scatter(&dxs, steps, *len)
            }
            _ => panic!("head cache does not match head kind"),
        }
    }
}

/// Non-overlapping max-pool over time with window `pool`; trailing steps
/// that do not fill a window are dropped. Output is flattened row-major
/// over (window, channel); ties go to the earliest step.
fn max_pool(x: &Array2<f64>, pool: usize) -> (Array1<f64>, Vec<usize>) {
    let windows = x.nrows() / pool;
    let ch = x.ncols();
    let mut out = Array1::zeros(windows * ch);
    let mut arg = vec![0; windows * ch];
    for w in 0..windows {
        for c in 0..ch {
            let mut best = w * pool;
            for t in w * pool + 1..(w + 1) * pool {
                if x[[t, c]] > x[[best, c]] {
                    best = t;
                }
            }
            out[w * ch + c] = x[[best, c]];
            arg[w * ch + c] = best;
        }
    }
    (out, arg)
}

fn unpool(x: &Array2<f64>, argmax: &[usize], d: ArrayView1<f64>, pool: usize) -> Array2<f64> {
    let ch = x.ncols();
    let mut out = Array2::zeros(x.dim());
    for (k, &t) in argmax.iter().enumerate() {
        out[[t, k % ch]] += d[k];
        debug_assert!(k / ch == t / pool);
    }
    out
}

fn scatter(dxs: &Array2<f64>, steps: &[usize], len: usize) -> Array2<f64> {
    let mut dx = Array2::zeros((len, dxs.ncols()));
    for (row, &t) in dxs.rows().into_iter().zip(steps) {
        dx.row_mut(t).assign(&row);
    }
    dx
}

impl Parameterized for Head {
    fn params(&self) -> Vec<&Param> {
        match self {
            Head::Cnn1d { conv, .. } => conv.params(),
            Head::Cnn2dMulti { convs } => convs.iter().flat_map(|c| c.params()).collect(),
            Head::Bilstm { lstm } => lstm.params(),
            Head::AttBilstm { first, second, attention } => {
                let mut p = first.params();
                p.extend(second.params());
                p.extend(attention.params());
                p
            }
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Head::Cnn1d { conv, .. } => conv.params_mut(),
            Head::Cnn2dMulti { convs } => convs.iter_mut().flat_map(|c| c.params_mut()).collect(),
            Head::Bilstm { lstm } => lstm.params_mut(),
            Head::AttBilstm { first, second, attention } => {
                let mut p = first.params_mut();
                p.extend(second.params_mut());
                p.extend(attention.params_mut());
                p
            }
        }
    }
}

/// Input-gradient check: largest relative error between `dL/dx` from
/// [`Head::backward`] and central differences of `L = r · head(x)`.
pub fn input_gradient_error(head: &Head, x: &SequenceMatrix, r: ArrayView1<f64>) -> Result<f64> {
    let mut h = head.clone();
    let (_, cache) = h.forward(x)?;
    let dx = h.backward(&cache, r);
    let eps = crate::nn::gradcheck::STEP;
    let mut worst: f64 = 0.0;
    let f = |rows: &Array2<f64>| -> Result<f64> {
        let m = SequenceMatrix { rows: rows.clone(), mask: x.mask.clone() };
        Ok(head.extract(&m)?.vector.dot(&r))
    };
    for t in x.active_steps() {
        for k in 0..x.dim() {
            let mut up = x.rows.clone();
            up[[t, k]] += eps;
            let mut down = x.rows.clone();
            down[[t, k]] -= eps;
            let numeric = (f(&up)? - f(&down)?) / (2.0 * eps);
            worst = worst.max(crate::nn::gradcheck::rel_err(dx[[t, k]], numeric));
        }
    }
    Ok(worst)
}

/// Parameter-gradient check for `L = r · head(x)`.
pub fn param_gradient_error(head: &Head, x: &SequenceMatrix, r: ArrayView1<f64>) -> Result<f64> {
    let mut h = head.clone();
    h.zero_grad();
    let (_, cache) = h.forward(x)?;
    h.backward(&cache, r);
    Ok(crate::nn::gradcheck::max_param_error(&mut h, |m| m.extract(x).map(|o| o.vector.dot(&r)).unwrap_or(f64::NAN)))
}
