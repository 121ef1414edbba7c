//! Frequency features against brute-force oracles, plus corpus and PCA
//! invariants.

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use ndarray::Array2;
use proptest::prelude::*;
use stancelab::corpus::{preprocess, stratified_split, Corpus, PreprocessMode, SplitSpec, StanceLabel, Tweet};
use stancelab::freqfeat::{
    char_ngrams, pca_fit, unigram_features, BlockKind, CharGramVectorizer, FeatureBlock, TfIdfModel, Vocabulary,
};

const TOL: f64 = 1e-9;

fn corpus_strategy() -> impl Strategy<Value = Vec<Vec<String>>> {
    // up to 20 documents over a 50-term alphabet
    prop::collection::vec(prop::collection::vec((0u8..50).prop_map(|t| format!("t{t}")), 0..12), 1..=20)
}

fn text_strategy() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[ab cà]{0,9}", 1..=8)
}

/// Term counts by direct scanning.
fn oracle_count(doc: &[String], term: &str) -> f64 {
    doc.iter().filter(|t| *t == term).count() as f64
}

/// idf straight from the formula `ln((1 + N) / (1 + df)) + 1`.
fn oracle_idf(docs: &[Vec<String>], term: &str) -> f64 {
    let df = docs.iter().filter(|d| d.iter().any(|t| t == term)).count() as f64;
    let n = docs.len() as f64;
    ((1.0 + n) / (1.0 + df)).ln() + 1.0
}

/// Every substring of `n` chars for `n` in `lo..=hi`, counted by scanning.
fn oracle_grams(text: &str, lo: usize, hi: usize) -> HashMap<String, f64> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = HashMap::new();
    for n in lo..=hi {
        for start in 0..chars.len() {
            if start + n <= chars.len() {
                *out.entry(chars[start..start + n].iter().collect()).or_insert(0.0) += 1.0;
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn unigram_matches_oracle(docs in corpus_strategy()) {
        let vocab = Vocabulary::fit(&docs);
        let block = unigram_features(&docs, &vocab);
        for (i, doc) in docs.iter().enumerate() {
            for (j, term) in vocab.terms().iter().enumerate() {
                prop_assert!((block.matrix[[i, j]] - oracle_count(doc, term)).abs() <= TOL);
            }
        }
        let mut terms: Vec<&String> = docs.iter().flatten().collect();
        terms.sort();
        terms.dedup();
        prop_assert_eq!(vocab.terms().iter().collect::<Vec<_>>(), terms);
    }

    #[test]
    fn tfidf_matches_oracle(docs in corpus_strategy(), unseen in corpus_strategy()) {
        let model = TfIdfModel::fit(&docs);
        for batch in [&docs, &unseen] {
            let block = model.transform(batch);
            for (i, doc) in batch.iter().enumerate() {
                for (j, term) in model.vocab.terms().iter().enumerate() {
                    let expected = oracle_count(doc, term) * oracle_idf(&docs, term);
                    prop_assert!((block.matrix[[i, j]] - expected).abs() <= TOL, "{} vs {}", block.matrix[[i, j]], expected);
                }
            }
        }
    }

    #[test]
    fn chargrams_match_oracle(texts in text_strategy(), lo in 1usize..4, span in 0usize..3) {
        let hi = lo + span;
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let v = CharGramVectorizer::fit(&refs, (lo, hi), None).unwrap();
        let block = v.transform(&refs);
        let mut all: Vec<String> = texts.iter().flat_map(|t| oracle_grams(t, lo, hi).into_keys()).collect();
        all.sort();
        all.dedup();
        prop_assert_eq!(v.vocab.terms(), &all[..]);
        for (i, t) in texts.iter().enumerate() {
            let counts = oracle_grams(t, lo, hi);
            for (j, g) in v.vocab.terms().iter().enumerate() {
                prop_assert!((block.matrix[[i, j]] - counts.get(g).copied().unwrap_or(0.0)).abs() <= TOL);
            }
            prop_assert_eq!(char_ngrams(t, (lo, hi)).len() as f64, counts.values().sum::<f64>());
        }
    }

    #[test]
    fn transforming_new_rows_leaves_fitted_state_alone(docs in corpus_strategy(), unseen in corpus_strategy()) {
        let model = TfIdfModel::fit(&docs);
        let before = model.clone();
        let _ = model.transform(&unseen);
        prop_assert_eq!(&model, &before);
        let x = Array2::from_shape_fn((docs.len() + 1, 3), |(i, j)| ((i * 7 + j * 3) % 5) as f64 + j as f64 * 0.1);
        let pca = pca_fit(&FeatureBlock::new("x", x.clone(), BlockKind::Vector).unwrap(), 2).unwrap();
        let frozen = pca.clone();
        let _ = pca.transform_matrix(&(x * 2.0)).unwrap();
        prop_assert_eq!(pca, frozen);
    }

    #[test]
    fn pca_components_are_orthonormal(rows in 2usize..12, cols in 1usize..8, seed in any::<u64>()) {
        let mut s = seed;
        let x = Array2::from_shape_simple_fn((rows, cols), || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        });
        let pca = pca_fit(&FeatureBlock::new("x", x, BlockKind::Vector).unwrap(), 100).unwrap();
        prop_assert!(pca.k() <= cols.min(rows));
        let gram = pca.components.dot(&pca.components.t());
        for i in 0..pca.k() {
            for j in 0..pca.k() {
                let target = if i == j { 1.0 } else { 0.0 };
                prop_assert!((gram[[i, j]] - target).abs() <= 1e-6);
            }
        }
        for w in pca.explained_variance.windows(2) {
            prop_assert!(w[0] + 1e-12 >= w[1]);
        }
    }

    #[test]
    fn cleaning_is_idempotent(text in "[a-zA-Z0-9 @#_.,!?'àé]{0,40}( https?://x\\.it/[a-z]{1,4})?") {
        let once = preprocess(&text, PreprocessMode::TwitaClean).join(" ");
        let twice = preprocess(&once, PreprocessMode::TwitaClean).join(" ");
        prop_assert_eq!(once, twice);
    }
}

fn labeled_corpus(counts: [usize; 3]) -> Corpus {
    let at = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let tweets = StanceLabel::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&l, n)| (0..n).map(move |i| (l, i)))
        .enumerate()
        .map(|(k, (l, i))| Tweet {
            id: format!("{l}-{i}-{k}"),
            author_id: format!("u{}", k % 7),
            text: "x".into(),
            created_at: at,
            bio: None,
            label: Some(l),
        })
        .collect();
    Corpus::new(tweets).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn split_is_seeded_and_stratified(a in 2usize..60, f in 2usize..60, n in 2usize..60, ratio in 0.1f64..0.9, seed in any::<u64>()) {
        let corpus = labeled_corpus([a, f, n]);
        let spec = SplitSpec { train_ratio: ratio, seed };
        let (t1, e1) = stratified_split(&corpus, spec).unwrap();
        let (t2, e2) = stratified_split(&corpus, spec).unwrap();
        prop_assert_eq!(&t1, &t2);
        prop_assert_eq!(&e1, &e2);
        prop_assert_eq!(t1.len() + e1.len(), corpus.len());
        let mut all: BTreeMap<StanceLabel, f64> = BTreeMap::new();
        for l in corpus.labels().unwrap() {
            *all.entry(l).or_default() += 1.0;
        }
        let mut train: BTreeMap<StanceLabel, f64> = BTreeMap::new();
        for l in t1.labels().unwrap() {
            *train.entry(l).or_default() += 1.0;
        }
        let (nt, nall) = (t1.len() as f64, corpus.len() as f64);
        for (c, k) in &all {
            let share = train.get(c).copied().unwrap_or(0.0) / nt;
            prop_assert!((share - k / nall).abs() <= 1.0 / nt + 1e-12, "class {c}: {share} vs {}", k / nall);
        }
    }
}
