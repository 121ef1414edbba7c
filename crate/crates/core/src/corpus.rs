//! Tweet ingestion, text cleaning and stratified splitting.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, Timelike};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StanceLabel {
    Against,
    Favor,
    None,
}

impl StanceLabel {
    /// Canonical class order; also the argmax tie-break order.
    pub const ALL: [StanceLabel; 3] = [StanceLabel::Against, StanceLabel::Favor, StanceLabel::None];

    pub fn index(self) -> usize {
        match self {
            StanceLabel::Against => 0,
            StanceLabel::Favor => 1,
            StanceLabel::None => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Against => "AGAINST",
            StanceLabel::Favor => "FAVOR",
            StanceLabel::None => "NONE",
        }
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StanceLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "AGAINST" => Ok(StanceLabel::Against),
            "FAVOR" | "FAVOUR" => Ok(StanceLabel::Favor),
            "NONE" => Ok(StanceLabel::None),
            other => Err(Error::invalid(format!(
                "unknown stance label `{other}` (expected AGAINST, FAVOR or NONE)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub author_id: String,
    pub text: String,
    pub created_at: NaiveDateTime,
    pub bio: Option<String>,
    pub label: Option<StanceLabel>,
}

impl Tweet {
    pub fn hour(&self) -> u32 {
        self.created_at.hour()
    }
}

/// An immutable collection of tweets with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    tweets: Vec<Tweet>,
}

impl Corpus {
    pub fn new(tweets: Vec<Tweet>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(tweets.len());
        for t in &tweets {
            if !seen.insert(t.id.as_str()) {
                return Err(Error::DuplicateId(t.id.clone()));
            }
        }
        Ok(Corpus { tweets })
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    pub fn tweets(&self) -> &[Tweet] {
        &self.tweets
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Tweet> {
        self.tweets.iter()
    }

    /// Gold labels; errors on the first unlabeled tweet.
    pub fn labels(&self) -> Result<Vec<StanceLabel>> {
        self.tweets
            .iter()
            .map(|t| t.label.ok_or_else(|| Error::Unlabeled(t.id.clone())))
            .collect()
    }

    pub fn is_labeled(&self) -> bool {
        self.tweets.iter().all(|t| t.label.is_some())
    }

    pub fn concat(&self, other: &Corpus) -> Result<Corpus> {
        let mut tweets = self.tweets.clone();
        tweets.extend(other.tweets.iter().cloned());
        Corpus::new(tweets)
    }

    fn subset(&self, idx: &[usize]) -> Corpus {
        Corpus {
            tweets: idx.iter().map(|&i| self.tweets[i].clone()).collect(),
        }
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Tweet;
    type IntoIter = std::slice::Iter<'a, Tweet>;

    fn into_iter(self) -> Self::IntoIter {
        self.tweets.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Csv,
    Jsonl,
}

impl CorpusFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(CorpusFormat::Csv),
            "jsonl" | "ndjson" => Some(CorpusFormat::Jsonl),
            _ => None,
        }
    }
}

const REQUIRED: [&str; 4] = ["id", "author_id", "text", "created_at"];

#[derive(Deserialize)]
struct RawTweet {
    id: Option<serde_json::Value>,
    author_id: Option<serde_json::Value>,
    text: Option<String>,
    created_at: Option<String>,
    bio: Option<String>,
    label: Option<String>,
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let tweets = match format {
        CorpusFormat::Csv => read_csv(file)?,
        CorpusFormat::Jsonl => read_jsonl(path, file)?,
    };
    if tweets.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Corpus::new(tweets)
}

fn read_csv(file: File) -> Result<Vec<Tweet>> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(file);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = col(name).ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }
    let bio_col = col("bio");
    let label_col = col("label");

    let mut tweets = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Malformed { line, reason: e.to_string() }
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let get = |i: usize| record.get(i).unwrap_or("").to_string();
        let opt = |c: Option<usize>| c.map(|i| get(i)).filter(|s| !s.trim().is_empty());
        tweets.push(make_tweet(
            line,
            get(idx[0]),
            get(idx[1]),
            get(idx[2]),
            &get(idx[3]),
            opt(bio_col),
            opt(label_col),
        )?);
    }
    Ok(tweets)
}

fn read_jsonl(path: &Path, file: File) -> Result<Vec<Tweet>> {
    let mut tweets = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawTweet = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: lineno,
            reason: e.to_string(),
        })?;
        let missing = |key: &str| Error::Malformed {
            line: lineno,
            reason: format!("missing required key `{key}`"),
        };
        let id = raw.id.map(json_scalar).ok_or_else(|| missing("id"))?;
        let author = raw.author_id.map(json_scalar).ok_or_else(|| missing("author_id"))?;
        let text = raw.text.ok_or_else(|| missing("text"))?;
        let created = raw.created_at.ok_or_else(|| missing("created_at"))?;
        tweets.push(make_tweet(
            lineno,
            id,
            author,
            text,
            &created,
            raw.bio.filter(|s| !s.trim().is_empty()),
            raw.label.filter(|s| !s.trim().is_empty()),
        )?);
    }
    Ok(tweets)
}

fn json_scalar(v: serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s,
        other => other.to_string(),
    }
}

fn make_tweet(
    line: usize,
    id: String,
    author_id: String,
    text: String,
    created_at: &str,
    bio: Option<String>,
    label: Option<String>,
) -> Result<Tweet> {
    let bad = |reason: String| Error::Malformed { line, reason };
    if id.trim().is_empty() {
        return Err(bad("empty id".into()));
    }
    if author_id.trim().is_empty() {
        return Err(bad("empty author_id".into()));
    }
    if text.trim().is_empty() {
        return Err(bad(format!("tweet `{id}` has empty text")));
    }
    let created_at = parse_timestamp(created_at).ok_or_else(|| bad(format!("unparseable created_at `{created_at}`")))?;
    let label = label
        .map(|l| l.parse::<StanceLabel>())
        .transpose()
        .map_err(|e| bad(e.to_string()))?;
    Ok(Tweet {
        id: id.trim().to_string(),
        author_id: author_id.trim().to_string(),
        text,
        created_at,
        bio,
        label,
    })
}

/// Accepts RFC 3339, `YYYY-MM-DD HH:MM:SS` and the Twitter API
/// `Wed Oct 10 20:19:24 +0000 2018` layout. Offsets are normalized to UTC.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    if let Ok(dt) = DateTime::parse_from_str(s, "%a %b %d %H:%M:%S %z %Y") {
        return Some(dt.naive_utc());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt);
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreprocessMode {
    /// Whitespace tokenization only.
    None,
    #[default]
    TwitaClean,
}

/// Literal token substituted for links by [`PreprocessMode::TwitaClean`].
pub const URL_TOKEN: &str = "URL";

pub fn preprocess(text: &str, mode: PreprocessMode) -> Vec<String> {
    match mode {
        PreprocessMode::None => text.split_whitespace().map(str::to_string).collect(),
        PreprocessMode::TwitaClean => text.split_whitespace().flat_map(clean_chunk).collect(),
    }
}

fn is_url(chunk: &str) -> bool {
    let lower = chunk.to_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn clean_chunk(chunk: &str) -> Vec<String> {
    if chunk == URL_TOKEN || is_url(chunk) {
        return vec![URL_TOKEN.to_string()];
    }
    let chars: Vec<char> = chunk.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if is_word_char(c) || ((c == '@' || c == '#') && chars.get(i + 1).is_some_and(|&n| is_word_char(n))) {
            let start = i;
            i += 1;
            while i < chars.len() && is_word_char(chars[i]) {
                i += 1;
            }
            out.push(chars[start..i].iter().collect::<String>().to_lowercase());
        } else {
            // punctuation, symbols and emoji become standalone tokens
            out.push(c.to_lowercase().collect());
            i += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_ratio: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_ratio: 0.8, seed: 0 }
    }
}

/// Per-class train quotas: floor of each class share, then the leftover
/// slots (up to `floor(N * ratio)`) go to the classes with the largest
/// fractional remainder, ties by larger class and then label order.
pub fn split_quotas(class_counts: &BTreeMap<StanceLabel, usize>, ratio: f64) -> BTreeMap<StanceLabel, usize> {
    let n: usize = class_counts.values().sum();
    let target = floor_eps(n as f64 * ratio);
    let mut quotas: BTreeMap<StanceLabel, usize> = class_counts
        .iter()
        .map(|(&c, &k)| (c, floor_eps(k as f64 * ratio)))
        .collect();
    let assigned: usize = quotas.values().sum();
    let mut order: Vec<(StanceLabel, f64, usize)> = class_counts
        .iter()
        .map(|(&c, &k)| {
            let exact = k as f64 * ratio;
            (c, exact - floor_eps(exact) as f64, k)
        })
        .collect();
    order.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.2.cmp(&a.2))
            .then(a.0.cmp(&b.0))
    });
    for (c, _, k) in order.iter().cycle().take(target.saturating_sub(assigned)) {
        let q = quotas.get_mut(c).expect("class present");
        if *q < *k {
            *q += 1;
        }
    }
    quotas
}

fn floor_eps(x: f64) -> usize {
    (x + 1e-9).floor() as usize
}

pub fn stratified_split(corpus: &Corpus, spec: SplitSpec) -> Result<(Corpus, Corpus)> {
    if !(spec.train_ratio > 0.0 && spec.train_ratio < 1.0) {
        return Err(Error::invalid(format!(
            "train_ratio must lie in (0, 1), got {}",
            spec.train_ratio
        )));
    }
    let labels = corpus.labels()?;
    let mut by_class: BTreeMap<StanceLabel, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(*l).or_default().push(i);
    }
    if let Some((c, members)) = by_class.iter().find(|(_, m)| m.len() < 2) {
        return Err(Error::invalid(format!(
            "class {c} has {} instance(s); stratification needs at least 2",
            members.len()
        )));
    }
    let counts = by_class.iter().map(|(c, m)| (*c, m.len())).collect();
    let quotas = split_quotas(&counts, spec.train_ratio);

    let mut in_train = vec![false; corpus.len()];
    for (class, mut members) in by_class {
        let mut rng = rng::stream(spec.seed, class.index() as u64);
        members.shuffle(&mut rng);
        for &i in &members[..quotas[&class]] {
            in_train[i] = true;
        }
    }
    let (train, eval): (Vec<usize>, Vec<usize>) = (0..corpus.len()).partition(|&i| in_train[i]);
    Ok((corpus.subset(&train), corpus.subset(&eval)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tweet(id: &str, label: Option<StanceLabel>) -> Tweet {
        Tweet {
            id: id.into(),
            author_id: "u".into(),
            text: "x".into(),
            created_at: parse_timestamp("2020-01-01 10:00:00").unwrap(),
            bio: None,
            label,
        }
    }

    fn corpus_with_counts(counts: &[(StanceLabel, usize)]) -> Corpus {
        let mut tweets = Vec::new();
        for (label, k) in counts {
            for i in 0..*k {
                tweets.push(tweet(&format!("{label}-{i}"), Some(*label)));
            }
        }
        Corpus::new(tweets).unwrap()
    }

    #[test]
    fn clean_example_sentence() {
        let toks = preprocess("Ciao @user http://t.co/x #Sardine!", PreprocessMode::TwitaClean);
        assert_eq!(toks, vec!["ciao", "@user", "URL", "#sardine", "!"]);
    }

    #[test]
    fn none_mode_is_whitespace_split() {
        assert_eq!(preprocess("abc", PreprocessMode::None), vec!["abc"]);
        assert_eq!(preprocess("  a   B\tc ", PreprocessMode::None), vec!["a", "B", "c"]);
        assert!(preprocess("", PreprocessMode::TwitaClean).is_empty());
    }

    #[test]
    fn clean_separates_punctuation() {
        let toks = preprocess("L'Italia  NON si lega!!", PreprocessMode::TwitaClean);
        assert_eq!(toks, vec!["l", "'", "italia", "non", "si", "lega", "!", "!"]);
        assert_eq!(preprocess("@ #", PreprocessMode::TwitaClean), vec!["@", "#"]);
    }

    #[test]
    fn split_of_2132_instances() {
        let c = corpus_with_counts(&[
            (StanceLabel::Against, 1028),
            (StanceLabel::Favor, 589),
            (StanceLabel::None, 515),
        ]);
        assert_eq!(c.len(), 2132);
        let (train, eval) = stratified_split(&c, SplitSpec { train_ratio: 0.8, seed: 3 }).unwrap();
        assert_eq!(train.len(), 1705);
        assert_eq!(eval.len(), 427);
    }

    #[test]
    fn split_remainder_goes_to_largest_fraction() {
        let c = corpus_with_counts(&[
            (StanceLabel::Against, 5),
            (StanceLabel::Favor, 3),
            (StanceLabel::None, 2),
        ]);
        let (train, _) = stratified_split(&c, SplitSpec { train_ratio: 0.8, seed: 0 }).unwrap();
        let labels = train.labels().unwrap();
        let count = |l| labels.iter().filter(|&&x| x == l).count();
        assert_eq!(
            (count(StanceLabel::Against), count(StanceLabel::Favor), count(StanceLabel::None)),
            (4, 2, 2)
        );
        assert_eq!(train.len(), 8);
    }

    #[test]
    fn split_rejects_bad_inputs() {
        let c = corpus_with_counts(&[(StanceLabel::Against, 4), (StanceLabel::Favor, 4)]);
        assert!(stratified_split(&c, SplitSpec { train_ratio: 1.0, seed: 0 }).is_err());
        assert!(stratified_split(&c, SplitSpec { train_ratio: 0.0, seed: 0 }).is_err());

        let mut tweets = c.tweets().to_vec();
        tweets.push(tweet("unlabeled", None));
        let c = Corpus::new(tweets).unwrap();
        assert!(matches!(
            stratified_split(&c, SplitSpec::default()),
            Err(Error::Unlabeled(id)) if id == "unlabeled"
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Corpus::new(vec![tweet("a", None), tweet("b", None), tweet("a", None)]).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(id) if id == "a"));
    }

    #[test]
    fn timestamps() {
        assert_eq!(parse_timestamp("2020-01-14T09:30:00Z").unwrap().hour(), 9);
        assert_eq!(parse_timestamp("Wed Oct 10 20:19:24 +0000 2018").unwrap().hour(), 20);
        assert_eq!(parse_timestamp("2020-01-14T09:30:00+02:00").unwrap().hour(), 7);
        assert!(parse_timestamp("yesterday").is_none());
    }
}
