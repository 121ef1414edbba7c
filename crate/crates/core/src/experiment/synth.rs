use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::StanceLabel;
use crate::{rng, Error, Result};

/// Parameters of the synthetic homophily corpus.
///
/// Users split evenly into `communities` groups; community `c` leans
/// towards label `c % 2` (AGAINST, FAVOR). Each tweet takes its author's
/// leaning with probability `label_purity`, otherwise a uniformly drawn
/// label. Friendship is dense inside a community (`p_intra`) and sparse
/// across (`p_inter`); a share of friend pairs also retweet or reply,
/// which raises their edge weight. Text is neutral filler where each token
/// is a cue word for the tweet's label with probability `cue_rate`, so
/// text alone carries a weak signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub users: usize,
    pub tweets_per_user: usize,
    pub communities: usize,
    pub label_purity: f64,
    pub p_intra: f64,
    pub p_inter: f64,
    pub extra_relation_rate: f64,
    pub tokens_per_tweet: usize,
    pub filler_vocab: usize,
    pub cues_per_label: usize,
    pub cue_rate: f64,
    pub embedding_dim: usize,
    /// Share of tweets written to `test.csv`.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            users: 200,
            tweets_per_user: 10,
            communities: 2,
            label_purity: 0.85,
            p_intra: 0.08,
            p_inter: 0.004,
            extra_relation_rate: 0.3,
            tokens_per_tweet: 12,
            filler_vocab: 300,
            cues_per_label: 6,
            cue_rate: 0.04,
            embedding_dim: 16,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub train: usize,
    pub test: usize,
    pub users: usize,
    pub relations: usize,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.users < 2 || self.tweets_per_user == 0 || self.communities == 0 || self.tokens_per_tweet == 0 {
            return Err(Error::invalid("synthetic corpus needs >= 2 users, >= 1 community, tweets and tokens"));
        }
        for (name, p) in [
            ("label_purity", self.label_purity),
            ("p_intra", self.p_intra),
            ("p_inter", self.p_inter),
            ("extra_relation_rate", self.extra_relation_rate),
            ("cue_rate", self.cue_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid("test_fraction must lie in (0, 1)"));
        }
        if self.filler_vocab == 0 || self.cues_per_label == 0 || self.embedding_dim == 0 {
            return Err(Error::invalid("vocabulary sizes and embedding_dim must be at least 1"));
        }
        Ok(())
    }
}

fn cue_word(label: StanceLabel, i: usize) -> String {
    format!("cue_{}_{i}", label.as_str().to_lowercase())
}

fn filler_word(i: usize) -> String {
    format!("w{i}")
}

fn user_name(u: usize) -> String {
    format!("u{u:04}")
}

struct Row {
    id: String,
    author: String,
    text: String,
    created_at: String,
    bio: String,
    label: StanceLabel,
}

fn write_rows(path: &Path, rows: &[&Row]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "author_id", "text", "created_at", "bio", "label"])?;
    for r in rows {
        w.write_record([&r.id, &r.author, &r.text, &r.created_at, &r.bio, r.label.as_str()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `train.csv`, `test.csv`, `relations.csv` and
/// `embeddings/custom.vec` under `dir`.
pub fn write_synthetic(spec: &SynthSpec, dir: impl AsRef<Path>) -> Result<SynthSummary> {
    spec.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("embeddings")).map_err(|e| Error::io(dir, e))?;
    let mut r = rng::stream(spec.seed, 0);
    let community = |u: usize| u % spec.communities;
    let leaning = |u: usize| StanceLabel::ALL[community(u) % 2];

    let mut rows = Vec::with_capacity(spec.users * spec.tweets_per_user);
    for u in 0..spec.users {
        for k in 0..spec.tweets_per_user {
            let label = if r.random::<f64>() < spec.label_purity {
                leaning(u)
            } else {
                StanceLabel::ALL[r.random_range(0..3)]
            };
            let tokens: Vec<String> = (0..spec.tokens_per_tweet)
                .map(|_| {
                    if r.random::<f64>() < spec.cue_rate {
                        cue_word(label, r.random_range(0..spec.cues_per_label))
                    } else {
                        filler_word(r.random_range(0..spec.filler_vocab))
                    }
                })
                .collect();
            let bio = if r.random::<f64>() < 0.5 { filler_word(r.random_range(0..spec.filler_vocab)) } else { String::new() };
            rows.push(Row {
                id: format!("t{u:04}_{k:03}"),
                author: user_name(u),
                text: tokens.join(" "),
                created_at: format!("2020-01-{:02} {:02}:{:02}:00", 1 + r.random_range(0..28), r.random_range(0..24), r.random_range(0..60)),
                bio,
                label,
            });
        }
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut r);
    let n_test = ((rows.len() as f64) * spec.test_fraction).round() as usize;
    let (test_idx, train_idx) = order.split_at(n_test.clamp(1, rows.len() - 1));
    let pick = |idx: &[usize]| {
        let mut v: Vec<&Row> = idx.iter().map(|&i| &rows[i]).collect();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    };
    write_rows(&dir.join("train.csv"), &pick(train_idx))?;
    write_rows(&dir.join("test.csv"), &pick(test_idx))?;

    let rel_path = dir.join("relations.csv");
    let mut w = csv::Writer::from_path(&rel_path)?;
    w.write_record(["src", "dst", "relation"])?;
    let mut relations = 0;
    for a in 0..spec.users {
        for b in 0..spec.users {
            if a == b {
                continue;
            }
            let p = if community(a) == community(b) { spec.p_intra } else { spec.p_inter };
            if r.random::<f64>() >= p {
                continue;
            }
            w.write_record([user_name(a), user_name(b), "friend".into()])?;
            relations += 1;
            for extra in ["retweet", "reply"] {
                if r.random::<f64>() < spec.extra_relation_rate {
                    w.write_record([user_name(a), user_name(b), extra.into()])?;
                    relations += 1;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io(&rel_path, e))?;

    // cue words of one label sit around a shared centroid; filler is noise
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let d = spec.embedding_dim;
    let draw = |r: &mut rng::Rng, scale: f64| -> Vec<f64> { (0..d).map(|_| scale * normal.sample(r)).collect() };
    let mut words: Vec<(String, Vec<f64>)> = Vec::new();
    for label in StanceLabel::ALL {
        let centroid = draw(&mut r, 1.0);
        for i in 0..spec.cues_per_label {
            let noise = draw(&mut r, 0.3);
            words.push((cue_word(label, i), centroid.iter().zip(noise).map(|(c, n)| c + n).collect()));
        }
    }
    for i in 0..spec.filler_vocab {
        words.push((filler_word(i), draw(&mut r, 1.0)));
    }
    let emb_path = dir.join("embeddings").join("custom.vec");
    let mut f = std::io::BufWriter::new(fs::File::create(&emb_path).map_err(|e| Error::io(&emb_path, e))?);
    let io = |e| Error::io(&emb_path, e);
    writeln!(f, "{} {d}", words.len()).map_err(io)?;
    for (w, v) in &words {
        let vals: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
        writeln!(f, "{w} {}", vals.join(" ")).map_err(io)?;
    }
    f.flush().map_err(io)?;

    Ok(SynthSummary { train: train_idx.len(), test: test_idx.len(), users: spec.users, relations })
}
