//! Word-embedding tables, per-tweet sequence matrices and cosine
//! similarity vectors (SVs).

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqfeat::{self, PcaModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    GloveItwiki,
    FasttextIt,
    Twita100,
    Twita300,
    BertMulti,
    Custom,
}

impl EmbeddingSource {
    pub const ALL: [EmbeddingSource; 6] = [
        EmbeddingSource::GloveItwiki,
        EmbeddingSource::FasttextIt,
        EmbeddingSource::Twita100,
        EmbeddingSource::Twita300,
        EmbeddingSource::BertMulti,
        EmbeddingSource::Custom,
    ];

    pub fn settings_name(self) -> &'static str {
        match self {
            EmbeddingSource::GloveItwiki => "GloVe",
            EmbeddingSource::FasttextIt => "FastText",
            EmbeddingSource::Twita100 => "TWITA100",
            EmbeddingSource::Twita300 => "TWITA300",
            EmbeddingSource::BertMulti => "BERT",
            EmbeddingSource::Custom => "Custom",
        }
    }

    /// File stem under `<data>/embeddings/`.
    pub fn file_stem(self) -> &'static str {
        match self {
            EmbeddingSource::GloveItwiki => "glove_itwiki",
            EmbeddingSource::FasttextIt => "fasttext_it",
            EmbeddingSource::Twita100 => "twita100",
            EmbeddingSource::Twita300 => "twita300",
            EmbeddingSource::BertMulti => "bert_multi",
            EmbeddingSource::Custom => "custom",
        }
    }

    pub fn expected_dim(self) -> Option<usize> {
        match self {
            EmbeddingSource::Twita100 => Some(100),
            EmbeddingSource::GloveItwiki | EmbeddingSource::FasttextIt | EmbeddingSource::Twita300 => Some(300),
            EmbeddingSource::BertMulti => Some(768),
            EmbeddingSource::Custom => None,
        }
    }

    pub fn from_settings_name(name: &str) -> Option<Self> {
        let lower = name.trim().to_ascii_lowercase();
        Self::ALL.into_iter().find(|s| {
            s.settings_name().to_ascii_lowercase() == lower || s.file_stem() == lower
        })
    }
}

impl fmt::Display for EmbeddingSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.settings_name())
    }
}

impl FromStr for EmbeddingSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_settings_name(s).ok_or_else(|| Error::invalid(format!("unknown embedding source `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub name: EmbeddingSource,
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Array2<f64>,
}

impl EmbeddingTable {
    /// Later duplicates of a word are ignored.
    pub fn from_pairs<I, S>(name: EmbeddingSource, dim: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut words = Vec::new();
        let mut index = HashMap::new();
        let mut data = Vec::new();
        for (w, v) in pairs {
            let w = w.into();
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: v.len() });
            }
            if index.contains_key(&w) {
                log::warn!("duplicate embedding for `{w}`, keeping the first");
                continue;
            }
            index.insert(w.clone(), words.len());
            words.push(w);
            data.extend(v);
        }
        let vectors = Array2::from_shape_vec((words.len(), dim), data).expect("rows checked");
        Ok(EmbeddingTable { name, words, index, vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<ArrayView1<'_, f64>> {
        self.index.get(word).map(|&i| self.vectors.row(i))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }
}

/// Reads the word2vec text format: a `count dim` header followed by
/// `word v1 ... vdim` lines.
pub fn load_embeddings(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Malformed { line: 1, reason: "missing `count dim` header".into() })?
        .map_err(|e| Error::io(path, e))?;
    let nums: Vec<usize> = header.split_whitespace().filter_map(|t| t.parse().ok()).collect();
    let (count, dim) = match nums.as_slice() {
        [c, d] if *d > 0 => (*c, *d),
        _ => return Err(Error::Malformed { line: 1, reason: format!("bad header `{header}`") }),
    };
    if let Some(exp) = expected_dim {
        if exp != dim {
            return Err(Error::DimensionMismatch { expected: exp, actual: dim });
        }
    }
    let mut pairs = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ').filter(|p| !p.is_empty());
        let word = parts.next().expect("non-empty line").to_string();
        let values: Vec<f64> = parts
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Malformed { line: lineno, reason: e.to_string() })?;
        if values.len() != dim {
            return Err(Error::Malformed {
                line: lineno,
                reason: format!("expected {dim} values for `{word}`, found {}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Malformed { line: lineno, reason: format!("non-finite value for `{word}`") });
        }
        pairs.push((word, values));
    }
    if pairs.len() != count {
        log::warn!("{}: header announces {count} vectors, found {}", path.display(), pairs.len());
    }
    EmbeddingTable::from_pairs(EmbeddingSource::Custom, dim, pairs)
}

pub fn save_embeddings(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{} {}", table.len(), table.dim()).map_err(io)?;
    for (word, row) in table.words.iter().zip(table.vectors.rows()) {
        if word.chars().any(char::is_whitespace) {
            return Err(Error::invalid(format!("word `{word}` contains whitespace")));
        }
        write!(w, "{word}").map_err(io)?;
        for v in row {
            write!(w, " {v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// `L x d` token matrix. `mask[t]` is true for real tokens (including
/// out-of-vocabulary ones, whose rows are zero) and false for padding.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMatrix {
    pub rows: Array2<f64>,
    pub mask: Vec<bool>,
}

impl SequenceMatrix {
    pub fn new(rows: Array2<f64>, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != rows.nrows() {
            return Err(Error::DimensionMismatch { expected: rows.nrows(), actual: mask.len() });
        }
        for (t, &m) in mask.iter().enumerate() {
            if !m && rows.row(t).iter().any(|&v| v != 0.0) {
                return Err(Error::invalid(format!("padding row {t} is not zero")));
            }
        }
        Ok(SequenceMatrix { rows, mask })
    }

    /// Every row is a real token.
    pub fn unpadded(rows: Array2<f64>) -> Self {
        let mask = vec![true; rows.nrows()];
        SequenceMatrix { rows, mask }
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// Indices of unmasked steps, in order.
    pub fn active_steps(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(t, _)| t).collect()
    }
}

/// Truncates or right-pads `tokens` to `max_len`; unknown tokens map to
/// zero rows that stay unmasked.
pub fn embed_sequence(tokens: &[String], table: &EmbeddingTable, max_len: usize) -> Result<SequenceMatrix> {
    if max_len == 0 {
        return Err(Error::invalid("max_len must be at least 1"));
    }
    let mut rows = Array2::zeros((max_len, table.dim()));
    let mut mask = vec![false; max_len];
    for (t, tok) in tokens.iter().take(max_len).enumerate() {
        mask[t] = true;
        if let Some(v) = table.get(tok) {
            rows.row_mut(t).assign(&v);
        }
    }
    Ok(SequenceMatrix { rows, mask })
}

fn cosine_row(v: ArrayView1<f64>, anchors_unit: &Array2<f64>) -> Array1<f64> {
    let norm = v.dot(&v).sqrt();
    if norm == 0.0 {
        return Array1::zeros(anchors_unit.nrows());
    }
    anchors_unit.dot(&v).mapv(|c| (c / norm).clamp(-1.0, 1.0))
}

/// Cosine similarity of any word to an ordered anchor vocabulary.
#[derive(Debug, Clone)]
pub struct SimilarityTable {
    base: Arc<EmbeddingTable>,
    anchors: Vec<String>,
    /// Unit-normalized anchor vectors (zero rows for zero vectors).
    anchors_unit: Array2<f64>,
}

impl SimilarityTable {
    pub fn anchors(&self) -> &[String] {
        &self.anchors
    }

    pub fn dim(&self) -> usize {
        self.anchors.len()
    }

    pub fn base(&self) -> &EmbeddingTable {
        &self.base
    }

    /// `None` when `word` is missing from the base table.
    pub fn vector(&self, word: &str) -> Option<Array1<f64>> {
        self.base.get(word).map(|v| cosine_row(v, &self.anchors_unit))
    }

    /// One row per word; unknown words give zero rows.
    pub fn matrix(&self, words: &[String]) -> Array2<f64> {
        let mut m = Array2::zeros((words.len(), self.dim()));
        for (i, w) in words.iter().enumerate() {
            if let Some(v) = self.vector(w) {
                m.row_mut(i).assign(&v);
            }
        }
        m
    }
}

pub fn build_similarity_table(table: Arc<EmbeddingTable>, anchor_vocab: &[String]) -> Result<SimilarityTable> {
    let mut anchors = Vec::new();
    let mut dropped = 0usize;
    for a in anchor_vocab {
        if table.contains(a) {
            anchors.push(a.clone());
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        log::warn!("{dropped} anchor word(s) missing from the {} table were dropped", table.name);
    }
    if anchors.is_empty() {
        return Err(Error::EmptyInput("similarity table needs at least one anchor word".into()));
    }
    let mut anchors_unit = Array2::zeros((anchors.len(), table.dim()));
    for (i, a) in anchors.iter().enumerate() {
        let v = table.get(a).expect("filtered");
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            anchors_unit.row_mut(i).assign(&v.mapv(|x| x / norm));
        }
    }
    Ok(SimilarityTable { base: table, anchors, anchors_unit })
}

/// PCA over the SV rows of `vocab`, one row per known word.
pub fn fit_sv_pca(sim: &SimilarityTable, vocab: &[String], k: usize) -> Result<PcaModel> {
    let known: Vec<String> = vocab.iter().filter(|w| sim.base.contains(w)).cloned().collect();
    if known.is_empty() {
        return Err(Error::EmptyInput("no vocabulary word has a base embedding".into()));
    }
    freqfeat::pca::fit_matrix(&sim.matrix(&known), k)
}

pub fn sv_sequence(
    tokens: &[String],
    sim: &SimilarityTable,
    pca: Option<&PcaModel>,
    max_len: usize,
) -> Result<SequenceMatrix> {
    if max_len == 0 {
        return Err(Error::invalid("max_len must be at least 1"));
    }
    if let Some(p) = pca {
        if p.input_dim() != sim.dim() {
            return Err(Error::DimensionMismatch { expected: sim.dim(), actual: p.input_dim() });
        }
    }
    let width = pca.map_or(sim.dim(), PcaModel::k);
    let mut rows = Array2::zeros((max_len, width));
    let mut mask = vec![false; max_len];
    for (t, tok) in tokens.iter().take(max_len).enumerate() {
        mask[t] = true;
        if let Some(sv) = sim.vector(tok) {
            let row = match pca {
                Some(p) => p.transform_row(sv.as_slice().expect("contiguous"))?,
                None => sv,
            };
            rows.row_mut(t).assign(&row);
        }
    }
    Ok(SequenceMatrix { rows, mask })
}

fn anchors_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".anchors");
    PathBuf::from(s)
}

/// Caches the SV rows of `words` in word2vec text format, with the anchor
/// list (one per line) in a `.anchors` sidecar.
pub fn save_similarity_vectors(sim: &SimilarityTable, words: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let known: Vec<&String> = words.iter().filter(|w| sim.base.contains(w)).collect();
    let pairs = known.iter().map(|w| ((*w).clone(), sim.vector(w).expect("known").to_vec()));
    let table = EmbeddingTable::from_pairs(EmbeddingSource::Custom, sim.dim(), pairs)?;
    save_embeddings(&table, path)?;
    let side = anchors_path(path);
    let mut body = sim.anchors.join("\n");
    body.push('\n');
    fs::write(&side, body).map_err(|e| Error::io(&side, e))
}

pub fn load_similarity_vectors(path: impl AsRef<Path>) -> Result<(EmbeddingTable, Vec<String>)> {
    let path = path.as_ref();
    let side = anchors_path(path);
    let anchors: Vec<String> = fs::read_to_string(&side)
        .map_err(|e| Error::io(&side, e))?
        .lines()
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    let table = load_embeddings(path, Some(anchors.len()))?;
    Ok((table, anchors))
}

/// Row table with a token index, for assembling many sequences cheaply.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    rows: Array2<f64>,
    index: HashMap<String, usize>,
}

/// Token ids against a [`LookupTable`], already truncated to `max_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSequence {
    pub ids: Vec<Option<u32>>,
    pub max_len: usize,
}

impl LookupTable {
    pub fn new(words: Vec<String>, rows: Array2<f64>) -> Result<Self> {
        if words.len() != rows.nrows() {
            return Err(Error::DimensionMismatch { expected: rows.nrows(), actual: words.len() });
        }
        let index = words.into_iter().enumerate().map(|(i, w)| (w, i)).collect();
        Ok(LookupTable { rows, index })
    }

    /// Restricts an embedding table to `vocab` (unknown words skipped).
    pub fn from_embeddings(table: &EmbeddingTable, vocab: &[String]) -> Self {
        let known: Vec<String> = vocab.iter().filter(|w| table.contains(w)).cloned().collect();
        let mut rows = Array2::zeros((known.len(), table.dim()));
        for (i, w) in known.iter().enumerate() {
            rows.row_mut(i).assign(&table.get(w).expect("known"));
        }
        LookupTable::new(known, rows).expect("shapes agree")
    }

    /// SV rows for `vocab`, optionally PCA-reduced.
    pub fn from_similarity(sim: &SimilarityTable, vocab: &[String], pca: Option<&PcaModel>) -> Result<Self> {
        let known: Vec<String> = vocab.iter().filter(|w| sim.base.contains(w)).cloned().collect();
        let svs = sim.matrix(&known);
        let rows = match pca {
            Some(p) => p.transform_matrix(&svs)?,
            None => svs,
        };
        LookupTable::new(known, rows)
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn encode(&self, tokens: &[String], max_len: usize) -> EncodedSequence {
        EncodedSequence {
            ids: tokens.iter().take(max_len).map(|t| self.index.get(t).map(|&i| i as u32)).collect(),
            max_len,
        }
    }

    pub fn materialize(&self, seq: &EncodedSequence) -> SequenceMatrix {
        let mut rows = Array2::zeros((seq.max_len, self.dim()));
        let mut mask = vec![false; seq.max_len];
        for (t, id) in seq.ids.iter().enumerate() {
            mask[t] = true;
            if let Some(i) = id {
                rows.row_mut(t).assign(&self.rows.row(*i as usize));
            }
        }
        SequenceMatrix { rows, mask }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    fn write(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("e.vec");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn parse_small_table() {
        let dir = tempfile::tempdir().unwrap();
        let t = load_embeddings(write(dir.path(), "2 3\na 1 0 0\nb 0 1 0\n"), None).unwrap();
        assert_eq!((t.len(), t.dim()), (2, 3));
        assert_eq!(t.get("b").unwrap().to_vec(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn ragged_line_and_dim_guard() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "2 3\na 1 0 0\nb 0 1\n");
        assert!(matches!(load_embeddings(&p, None), Err(Error::Malformed { line: 3, .. })));
        let p = write(dir.path(), "1 300\n");
        assert!(matches!(
            load_embeddings(&p, Some(100)),
            Err(Error::DimensionMismatch { expected: 100, actual: 300 })
        ));
    }

    #[test]
    fn duplicate_word_keeps_first() {
        let dir = tempfile::tempdir().unwrap();
        let t = load_embeddings(write(dir.path(), "2 1\na 1\na 2\n"), None).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("a").unwrap()[0], 1.0);
    }

    fn table() -> EmbeddingTable {
        EmbeddingTable::from_pairs(
            EmbeddingSource::Custom,
            3,
            [("a", vec![1.0, 0.0, 0.0]), ("b", vec![0.0, 1.0, 0.0]), ("c", vec![1.0, 1.0, 0.0])],
        )
        .unwrap()
    }

    #[test]
    fn sequence_padding_truncation_and_oov() {
        let t = table();
        let s = embed_sequence(&toks(&["a", "b"]), &t, 4).unwrap();
        assert_eq!(
            s.rows,
            array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
        );
        assert_eq!(s.mask, vec![true, true, false, false]);

        let s = embed_sequence(&toks(&["x", "y"]), &t, 2).unwrap();
        assert!(s.rows.iter().all(|&v| v == 0.0));
        assert_eq!(s.mask, vec![true, true]);

        let long: Vec<String> = (0..80).map(|i| if i < 64 { "a".into() } else { "b".into() }).collect();
        let s = embed_sequence(&long, &t, 64).unwrap();
        assert_eq!(s.len(), 64);
        assert!(s.rows.rows().into_iter().all(|r| r[0] == 1.0));
    }

    #[test]
    fn similarity_basics() {
        let t = Arc::new(table());
        let sim = build_similarity_table(t.clone(), &toks(&["a", "b", "zzz"])).unwrap();
        assert_eq!(sim.anchors(), ["a", "b"]);
        let sv = sim.vector("a").unwrap();
        assert!((sv[0] - 1.0).abs() < 1e-12);
        assert_eq!(sv[1], 0.0);
        let sv = sim.vector("c").unwrap();
        assert!((sv[0] - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(sim.vector("nope").is_none());
        assert!(build_similarity_table(t, &toks(&["zzz"])).is_err());
    }

    #[test]
    fn sv_sequences() {
        let t = Arc::new(table());
        let sim = build_similarity_table(t, &toks(&["a", "b", "c"])).unwrap();
        let s = sv_sequence(&toks(&["c", "q"]), &sim, None, 3).unwrap();
        assert_eq!(s.dim(), 3);
        assert_eq!(s.rows.row(1).to_vec(), vec![0.0; 3]);
        assert_eq!(s.mask, vec![true, true, false]);

        let pca = fit_sv_pca(&sim, &toks(&["a", "b", "c"]), 2).unwrap();
        let s = sv_sequence(&toks(&["q"]), &sim, Some(&pca), 2).unwrap();
        assert_eq!(s.dim(), pca.k());
        assert!(s.rows.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lookup_matches_direct_assembly() {
        let t = table();
        let words = toks(&["a", "b", "c", "x"]);
        let lookup = LookupTable::from_embeddings(&t, &words);
        let tokens = toks(&["c", "x", "a", "b", "a"]);
        for max_len in [1, 3, 8] {
            let direct = embed_sequence(&tokens, &t, max_len).unwrap();
            assert_eq!(lookup.materialize(&lookup.encode(&tokens, max_len)), direct);
        }
    }
}
