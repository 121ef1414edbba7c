use std::collections::{BTreeMap, HashMap, HashSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{BlockKind, FeatureBlock};
use crate::error::{Error, Result};

/// Ordered term list with a reverse index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(terms: Vec<String>) -> Self {
        Vocabulary::from_terms(terms)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.terms
    }
}

impl Vocabulary {
    /// Keeps the given order; duplicates after the first are dropped.
    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out = Vec::new();
        let mut index = HashMap::new();
        for t in terms {
            let t = t.into();
            if !index.contains_key(&t) {
                index.insert(t.clone(), out.len());
                out.push(t);
            }
        }
        Vocabulary { terms: out, index }
    }

    /// Sorted vocabulary of every term in `docs`.
    pub fn fit(docs: &[Vec<String>]) -> Self {
        Self::fit_capped(docs, None)
    }

    /// Like [`Vocabulary::fit`], keeping only the `max_terms` terms with the
    /// highest document frequency (ties resolved lexicographically).
    pub fn fit_capped(docs: &[Vec<String>], max_terms: Option<usize>) -> Self {
        let df = document_frequencies(docs);
        let mut terms: Vec<(&String, usize)> = df.iter().map(|(t, &n)| (t, n)).collect();
        if let Some(cap) = max_terms {
            if terms.len() > cap {
                terms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
                terms.truncate(cap);
                terms.sort_by(|a, b| a.0.cmp(b.0));
            }
        }
        Self::from_terms(terms.into_iter().map(|(t, _)| t.clone()))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }
}

fn document_frequencies(docs: &[Vec<String>]) -> BTreeMap<String, usize> {
    let mut df = BTreeMap::new();
    for doc in docs {
        let unique: HashSet<&String> = doc.iter().collect();
        for t in unique {
            *df.entry(t.clone()).or_insert(0) += 1;
        }
    }
    df
}

fn count_matrix(docs: &[Vec<String>], vocab: &Vocabulary) -> Array2<f64> {
    let mut m = Array2::zeros((docs.len(), vocab.len()));
    for (i, doc) in docs.iter().enumerate() {
        for t in doc {
            if let Some(j) = vocab.get(t) {
                m[[i, j]] += 1.0;
            }
        }
    }
    m
}

/// Raw term counts; out-of-vocabulary tokens are ignored.
pub fn unigram_features(docs: &[Vec<String>], vocab: &Vocabulary) -> FeatureBlock {
    FeatureBlock {
        name: "unigram".into(),
        matrix: count_matrix(docs, vocab),
        kind: BlockKind::Vector,
        columns: vocab.terms().to_vec(),
    }
}

/// Raw-count TF times smoothed IDF, `ln((1 + N) / (1 + df)) + 1`, without
/// row normalization. Document frequencies are frozen at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    pub vocab: Vocabulary,
    pub idf: Vec<f64>,
    pub n_docs: usize,
}

impl TfIdfModel {
    pub fn fit(docs: &[Vec<String>]) -> Self {
        Self::fit_with_vocab(docs, Vocabulary::fit(docs))
    }

    pub fn fit_with_vocab(docs: &[Vec<String>], vocab: Vocabulary) -> Self {
        let df = document_frequencies(docs);
        let n = docs.len() as f64;
        let idf = vocab
            .terms()
            .iter()
            .map(|t| {
                let d = df.get(t).copied().unwrap_or(0) as f64;
                ((1.0 + n) / (1.0 + d)).ln() + 1.0
            })
            .collect();
        TfIdfModel { vocab, idf, n_docs: docs.len() }
    }

    pub fn transform(&self, docs: &[Vec<String>]) -> FeatureBlock {
        let mut m = count_matrix(docs, &self.vocab);
        for mut row in m.rows_mut() {
            for (v, w) in row.iter_mut().zip(&self.idf) {
                *v *= w;
            }
        }
        FeatureBlock {
            name: "tfidf".into(),
            matrix: m,
            kind: BlockKind::Vector,
            columns: self.vocab.terms().to_vec(),
        }
    }
}

pub fn tfidf_features(docs: &[Vec<String>], model: &TfIdfModel) -> FeatureBlock {
    model.transform(docs)
}

/// All character n-grams of `text` with `lo <= n <= hi`, in order of
/// length then position.
pub fn char_ngrams(text: &str, (lo, hi): (usize, usize)) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    for n in lo..=hi {
        if n == 0 || n > chars.len() {
            continue;
        }
        for w in chars.windows(n) {
            out.push(w.iter().collect());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharGramVectorizer {
    pub n_range: (usize, usize),
    pub vocab: Vocabulary,
}

impl CharGramVectorizer {
    pub fn new(n_range: (usize, usize), vocab: Vocabulary) -> Result<Self> {
        check_range(n_range)?;
        Ok(CharGramVectorizer { n_range, vocab })
    }

    pub fn fit(docs: &[&str], n_range: (usize, usize), max_terms: Option<usize>) -> Result<Self> {
        check_range(n_range)?;
        let grams = grams_of(docs, n_range);
        Ok(CharGramVectorizer { n_range, vocab: Vocabulary::fit_capped(&grams, max_terms) })
    }

    pub fn grams(&self, docs: &[&str]) -> Vec<Vec<String>> {
        grams_of(docs, self.n_range)
    }

    pub fn transform(&self, docs: &[&str]) -> FeatureBlock {
        FeatureBlock {
            name: "chargrams".into(),
            matrix: count_matrix(&self.grams(docs), &self.vocab),
            kind: BlockKind::Vector,
            columns: self.vocab.terms().to_vec(),
        }
    }
}

fn check_range((lo, hi): (usize, usize)) -> Result<()> {
    if lo == 0 || lo > hi {
        return Err(Error::invalid(format!("char n-gram range ({lo}, {hi}) needs 1 <= lo <= hi")));
    }
    Ok(())
}

fn grams_of(docs: &[&str], n_range: (usize, usize)) -> Vec<Vec<String>> {
    docs.iter().map(|d| char_ngrams(d, n_range)).collect()
}

pub fn chargram_features(docs: &[&str], vectorizer: &CharGramVectorizer) -> FeatureBlock {
    vectorizer.transform(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn docs(raw: &[&[&str]]) -> Vec<Vec<String>> {
        raw.iter().map(|d| d.iter().map(|s| s.to_string()).collect()).collect()
    }

    #[test]
    fn unigram_counts() {
        let vocab = Vocabulary::from_terms(["a", "b", "c"]);
        let block = unigram_features(&docs(&[&["a", "b", "a"], &[], &["x", "y"]]), &vocab);
        assert_eq!(block.matrix, array![[2.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
    }

    #[test]
    fn tfidf_hand_example() {
        let train = docs(&[&["a", "b", "a"], &["b", "c"]]);
        let model = TfIdfModel::fit(&train);
        let block = model.transform(&train);
        let expected = 2.0 * ((3.0f64 / 2.0).ln() + 1.0);
        assert!((block.matrix[[0, 0]] - expected).abs() < 1e-12);
        assert!((block.matrix[[0, 0]] - 2.811).abs() < 1e-3);
        assert_eq!(block.matrix[[0, 1]], 1.0);
        assert_eq!(block.matrix[[0, 2]], 0.0);

        let test = model.transform(&docs(&[&["zzz", "b"]]));
        assert_eq!(test.matrix.row(0).to_vec(), vec![0.0, 1.0, 0.0]);
        assert_eq!(model.n_docs, 2);
    }

    #[test]
    fn chargram_examples() {
        let v = CharGramVectorizer::new((2, 2), Vocabulary::from_terms(["ab", "ba"])).unwrap();
        assert_eq!(v.transform(&["aba"]).matrix, array![[1.0, 1.0]]);
        assert_eq!(v.transform(&["a"]).matrix, array![[0.0, 0.0]]);

        let v = CharGramVectorizer::fit(&["aaa"], (2, 3), None).unwrap();
        assert_eq!(v.vocab.terms(), ["aa", "aaa"]);
        assert_eq!(v.transform(&["aaa"]).matrix, array![[2.0, 1.0]]);

        assert!(CharGramVectorizer::fit(&["x"], (3, 2), None).is_err());
        assert!(CharGramVectorizer::fit(&["x"], (0, 2), None).is_err());
    }

    #[test]
    fn capped_vocabulary_keeps_most_frequent() {
        let d = docs(&[&["a", "b"], &["b", "c"], &["b", "c"]]);
        assert_eq!(Vocabulary::fit_capped(&d, Some(2)).terms(), ["b", "c"]);
    }
}
