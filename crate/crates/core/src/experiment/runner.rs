use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use ndarray::{concatenate, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::metrics::{score, Scores};
use crate::corpus::{load_corpus, preprocess, stratified_split, Corpus, CorpusFormat, StanceLabel};
use crate::embedfeat::{
    build_similarity_table, fit_sv_pca, load_embeddings, EmbeddingSource, EmbeddingTable, LookupTable, SequenceMatrix,
    SimilarityTable,
};
use crate::freqfeat::{
    mention_count, pca_fit, structural_features, CharGramVectorizer, Communities, FeatureBlock, BlockKind, FreqFeature,
    PcaModel, StructuralLayout, TfIdfModel, Vocabulary,
};
use crate::fusion::{BlockSlot, BlockValue, FusionConfig, FusionInput, FusionModel, Prediction, SlotSpec, TrainHistory};
use crate::gnnembed::{generate_walks, train_skipgram, user_vector, NodeEmbedding, SkipGramConfig, WalkConfig};
use crate::netgraph::{build_graph, community_detect, load_relations, InteractionGraph, Relation, RelationRecord};
use crate::{rng, Error, Result};

const TRAIN_STEM: &str = "train";
const TEST_STEM: &str = "test";
const RELATIONS_FILE: &str = "relations.csv";
const EMBEDDINGS_DIR: &str = "embeddings";

/// Seed streams derived from the master seed for sub-configs left at 0.
const STREAM_FUSION: u64 = 1;
const STREAM_WALKS: u64 = 2;
const STREAM_SKIPGRAM: u64 = 3;
const STREAM_COMMUNITIES: u64 = 4;

type NodeKey = (bool, String);

/// A data directory plus caches shared by the runs that read it.
///
/// Layout: `train.csv|jsonl`, optional `test.csv|jsonl`, optional
/// `relations.csv` (`src,dst,relation`) and `embeddings/<stem>.vec`.
#[derive(Debug)]
pub struct Resources {
    dir: PathBuf,
    corpora: Mutex<HashMap<&'static str, Option<Arc<Corpus>>>>,
    embeddings: Mutex<HashMap<EmbeddingSource, Arc<EmbeddingTable>>>,
    relations: Mutex<Option<Arc<Vec<RelationRecord>>>>,
    graphs: Mutex<HashMap<bool, Arc<InteractionGraph>>>,
    node_embeddings: Mutex<HashMap<NodeKey, Arc<NodeEmbedding>>>,
}

impl Resources {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Resources {
            dir: dir.into(),
            corpora: Mutex::default(),
            embeddings: Mutex::default(),
            relations: Mutex::default(),
            graphs: Mutex::default(),
            node_embeddings: Mutex::default(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn embedding_path(&self, source: EmbeddingSource) -> PathBuf {
        self.dir.join(EMBEDDINGS_DIR).join(format!("{}.vec", source.file_stem()))
    }

    pub fn relations_path(&self) -> PathBuf {
        self.dir.join(RELATIONS_FILE)
    }

    fn corpus_path(&self, stem: &str) -> Option<PathBuf> {
        ["csv", "jsonl"].iter().map(|ext| self.dir.join(format!("{stem}.{ext}"))).find(|p| p.is_file())
    }

    fn corpus(&self, stem: &'static str) -> Result<Option<Arc<Corpus>>> {
        let mut cache = self.corpora.lock().expect("cache lock");
        if let Some(c) = cache.get(stem) {
            return Ok(c.clone());
        }
        let loaded = match self.corpus_path(stem) {
            Some(p) => {
                let format = CorpusFormat::from_path(&p).expect("known extension");
                Some(Arc::new(load_corpus(&p, format)?))
            }
            None => None,
        };
        cache.insert(stem, loaded.clone());
        Ok(loaded)
    }

    /// The labeled training corpus (`train.csv` or `train.jsonl`).
    pub fn train(&self) -> Result<Arc<Corpus>> {
        self.corpus(TRAIN_STEM)?.ok_or_else(|| Error::MissingFile(self.dir.join(format!("{TRAIN_STEM}.csv"))))
    }

    pub fn test(&self) -> Result<Option<Arc<Corpus>>> {
        self.corpus(TEST_STEM)
    }

    pub fn embeddings(&self, source: EmbeddingSource) -> Result<Arc<EmbeddingTable>> {
        let mut cache = self.embeddings.lock().expect("cache lock");
        if let Some(t) = cache.get(&source) {
            return Ok(t.clone());
        }
        let path = self.embedding_path(source);
        if !path.is_file() {
            return Err(Error::MissingFile(path));
        }
        let table = Arc::new(load_embeddings(&path, source.expected_dim())?);
        cache.insert(source, table.clone());
        Ok(table)
    }

    pub fn relations(&self) -> Result<Arc<Vec<RelationRecord>>> {
        let mut cache = self.relations.lock().expect("cache lock");
        if let Some(r) = cache.as_ref() {
            return Ok(r.clone());
        }
        let path = self.relations_path();
        if !path.is_file() {
            return Err(Error::MissingFile(path));
        }
        let r = Arc::new(load_relations(&path)?);
        *cache = Some(r.clone());
        Ok(r)
    }

    pub fn graph(&self, require_friendship: bool) -> Result<Arc<InteractionGraph>> {
        let relations = self.relations()?;
        let mut cache = self.graphs.lock().expect("cache lock");
        Ok(cache
            .entry(require_friendship)
            .or_insert_with(|| Arc::new(build_graph(&relations, require_friendship)))
            .clone())
    }

    /// Walks plus skip-gram, cached per (graph, walk config, skip-gram
    /// config).
    pub fn node_embedding(
        &self,
        require_friendship: bool,
        walks: &WalkConfig,
        skipgram: &SkipGramConfig,
    ) -> Result<Arc<NodeEmbedding>> {
        let key = (require_friendship, serde_json::to_string(&(walks, skipgram))?);
        let graph = self.graph(require_friendship)?;
        let mut cache = self.node_embeddings.lock().expect("cache lock");
        if let Some(e) = cache.get(&key) {
            return Ok(e.clone());
        }
        let corpus = generate_walks(&graph, walks)?;
        log::info!("{} {} walks over {} nodes", corpus.len(), walks.strategy, graph.node_count());
        let (emb, _) = train_skipgram(&corpus, skipgram)?;
        let emb = Arc::new(emb);
        cache.insert(key, emb.clone());
        Ok(emb)
    }
}

/// Effective seeds of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub master: u64,
    pub split: u64,
    pub fusion: u64,
    pub walks: u64,
    pub skipgram: u64,
    pub communities: u64,
}

impl RunSeeds {
    /// Sub-config seeds of 0 are derived from the master seed; any other
    /// value is kept as an explicit override.
    pub fn resolve(cfg: &RunConfig) -> Self {
        let pick = |own: u64, stream: u64| if own == 0 { rng::derive(cfg.seed, stream) } else { own };
        RunSeeds {
            master: cfg.seed,
            split: cfg.split.seed,
            fusion: pick(cfg.fusion.seed, STREAM_FUSION),
            walks: pick(cfg.walks.seed, STREAM_WALKS),
            skipgram: pick(cfg.skipgram.seed, STREAM_SKIPGRAM),
            communities: rng::derive(cfg.seed, STREAM_COMMUNITIES),
        }
    }
}

fn tokenize(corpus: &Corpus, cfg: &RunConfig) -> Vec<Vec<String>> {
    corpus.iter().map(|t| preprocess(&t.text, cfg.preprocessing)).collect()
}

/// Distinct tokens ordered by decreasing count, ties lexicographic.
fn vocab_by_frequency(docs: &[Vec<String>]) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for d in docs {
        for t in d {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let mut v: Vec<(&str, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    v.into_iter().map(|(t, _)| t.to_string()).collect()
}

fn distinct_tokens(docs: &[Vec<String>]) -> Vec<String> {
    let mut v: Vec<String> = docs.iter().flatten().cloned().collect();
    v.sort();
    v.dedup();
    v
}

/// Encodes every document, giving empty ones a single unknown step so
/// heads always see at least one active position.
fn encode_all(table: &Arc<LookupTable>, docs: &[Vec<String>], max_len: usize) -> Vec<BlockValue> {
    let blank = [String::new()];
    docs.iter()
        .map(|d| {
            let tokens = if d.is_empty() { &blank[..] } else { &d[..] };
            BlockValue::Encoded(table.clone(), table.encode(tokens, max_len))
        })
        .collect()
}

/// Frequency features fitted on training rows: raw columns, z-scoring and
/// PCA.
#[derive(Debug, Clone)]
struct FreqPipeline {
    features: Vec<FreqFeature>,
    vocab: Option<Vocabulary>,
    tfidf: Option<TfIdfModel>,
    chargrams: Option<CharGramVectorizer>,
    chargram_tfidf: Option<TfIdfModel>,
    communities: Communities,
    layout: StructuralLayout,
    mean: Array1<f64>,
    scale: Array1<f64>,
    pca: PcaModel,
}

impl FreqPipeline {
    fn fit(cfg: &RunConfig, features: &[FreqFeature], corpus: &Corpus, docs: &[Vec<String>], communities: Communities) -> Result<Self> {
        let has = |f: FreqFeature| features.contains(&f);
        let vocab = (has(FreqFeature::Unigram) || has(FreqFeature::TfidfUnigram))
            .then(|| Vocabulary::fit_capped(docs, cfg.max_terms));
        let tfidf = has(FreqFeature::TfidfUnigram)
            .then(|| TfIdfModel::fit_with_vocab(docs, vocab.clone().expect("fitted above")));
        let joined: Vec<String> = docs.iter().map(|d| d.join(" ")).collect();
        let texts: Vec<&str> = joined.iter().map(String::as_str).collect();
        let chargrams = if has(FreqFeature::Chargrams) || has(FreqFeature::TfidfChargrams) {
            Some(CharGramVectorizer::fit(&texts, cfg.chargram_range, cfg.max_terms)?)
        } else {
            None
        };
        let chargram_tfidf = match (&chargrams, has(FreqFeature::TfidfChargrams)) {
            (Some(v), true) => Some(TfIdfModel::fit_with_vocab(&v.grams(&texts), v.vocab.clone())),
            _ => None,
        };
        let layout = StructuralLayout::new(&communities);
        let mut p = FreqPipeline {
            features: features.to_vec(),
            vocab,
            tfidf,
            chargrams,
            chargram_tfidf,
            communities,
            layout,
            mean: Array1::zeros(0),
            scale: Array1::zeros(0),
            pca: PcaModel {
                components: Array2::zeros((0, 0)),
                mean: Array1::zeros(0),
                explained_variance: vec![],
                requested_k: 0,
            },
        };
        let raw = p.raw(corpus, docs)?;
        p.mean = raw.mean_axis(Axis(0)).expect("non-empty corpus");
        p.scale = raw.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
        let z = p.standardize(raw);
        p.pca = pca_fit(&FeatureBlock::new("freq", z, BlockKind::Vector)?, cfg.freq_pca_k)?;
        Ok(p)
    }

    fn raw(&self, corpus: &Corpus, docs: &[Vec<String>]) -> Result<Array2<f64>> {
        let n = corpus.len();
        let joined: Vec<String> = docs.iter().map(|d| d.join(" ")).collect();
        let texts: Vec<&str> = joined.iter().map(String::as_str).collect();
        let structural: Option<Vec<Vec<f64>>> = self
            .features
            .iter()
            .any(|f| self.layout.range(*f).is_some())
            .then(|| corpus.iter().map(|t| structural_features(t, &self.communities)).collect());
        let mut parts: Vec<Array2<f64>> = Vec::new();
        for &f in &self.features {
            let m = match f {
                FreqFeature::Unigram => crate::freqfeat::unigram_features(docs, self.vocab.as_ref().expect("fitted")).matrix,
                FreqFeature::TfidfUnigram => self.tfidf.as_ref().expect("fitted").transform(docs).matrix,
                FreqFeature::Chargrams => self.chargrams.as_ref().expect("fitted").transform(&texts).matrix,
                FreqFeature::TfidfChargrams => {
                    let grams = self.chargrams.as_ref().expect("fitted").grams(&texts);
                    self.chargram_tfidf.as_ref().expect("fitted").transform(&grams).matrix
                }
                FreqFeature::Mentions => Array2::from_shape_fn((n, 1), |(i, _)| mention_count(&corpus.tweets()[i])),
                other => {
                    let range = self.layout.range(other).expect("structural feature");
                    let rows = structural.as_ref().expect("computed above");
                    Array2::from_shape_fn((n, range.len()), |(i, j)| rows[i][range.start + j])
                }
            };
            parts.push(m);
        }
        let views: Vec<_> = parts.iter().map(|m| m.view()).collect();
        let out = concatenate(Axis(1), &views).map_err(|e| Error::invalid(e.to_string()))?;
        if out.ncols() == 0 {
            // e.g. community features over a graph with no communities
            return Ok(Array2::zeros((n, 1)));
        }
        Ok(out)
    }

    fn standardize(&self, mut raw: Array2<f64>) -> Array2<f64> {
        raw -= &self.mean.view().insert_axis(Axis(0));
        raw /= &self.scale.view().insert_axis(Axis(0));
        raw
    }

    fn transform(&self, corpus: &Corpus, docs: &[Vec<String>]) -> Result<Array2<f64>> {
        let z = self.standardize(self.raw(corpus, docs)?);
        self.pca.transform_matrix(&z)
    }
}

/// Everything fitted on training rows that turns a corpus into fusion
/// inputs.
#[derive(Debug, Clone)]
pub struct Featurizer {
    max_len: usize,
    preprocessing: crate::corpus::PreprocessMode,
    embed: Option<(SlotSpec, Arc<EmbeddingTable>)>,
    sv: Option<(SlotSpec, Arc<SimilarityTable>, Option<PcaModel>)>,
    freq: Option<(SlotSpec, FreqPipeline)>,
    graph: Option<(SlotSpec, Arc<NodeEmbedding>)>,
}

impl Featurizer {
    pub fn fit(cfg: &RunConfig, train: &Corpus, res: &Resources, seeds: &RunSeeds) -> Result<Self> {
        let docs = tokenize(train, cfg);
        let embed = match cfg.embed {
            Some(e) => {
                let table = res.embeddings(e.source)?;
                let spec = SlotSpec::Sequence { head: cfg.head_config(e.head), in_dim: table.dim(), len: cfg.max_len };
                Some((spec, table))
            }
            None => None,
        };
        let sv = match cfg.sv {
            Some(s) => {
                let base = res.embeddings(cfg.sv_base())?;
                let mut anchors: Vec<String> =
                    vocab_by_frequency(&docs).into_iter().filter(|w| base.contains(w)).collect();
                if let Some(cap) = cfg.sv_max_anchors {
                    anchors.truncate(cap);
                }
                let sim = build_similarity_table(base, &anchors)?;
                let pca = if s.pca { Some(fit_sv_pca(&sim, &distinct_tokens(&docs), cfg.sv_pca_k)?) } else { None };
                let in_dim = pca.as_ref().map_or(sim.dim(), PcaModel::k);
                let spec = SlotSpec::Sequence { head: cfg.head_config(s.head), in_dim, len: cfg.max_len };
                Some((spec, Arc::new(sim), pca))
            }
            None => None,
        };
        let freq = match &cfg.freq {
            Some(f) => {
                let communities = if f.features.iter().any(|x| x.uses_graph()) {
                    let g = res.graph(cfg.require_friendship)?;
                    let mut c = Communities::default();
                    for r in Relation::ALL {
                        *c.get_mut(r) = community_detect(&g, r, seeds.communities);
                    }
                    c
                } else {
                    Communities::default()
                };
                let pipe = FreqPipeline::fit(cfg, &f.features, train, &docs, communities)?;
                let spec = match f.head {
                    Some(h) => SlotSpec::Sequence { head: cfg.head_config(h), in_dim: 1, len: cfg.freq_pca_k.max(pipe.pca.k()) },
                    None => SlotSpec::Vector { dim: pipe.pca.k() },
                };
                Some((spec, pipe))
            }
            None => None,
        };
        let graph = match cfg.graph {
            Some(strategy) => {
                let walks = WalkConfig { strategy, seed: seeds.walks, ..cfg.walks.clone() };
                let skipgram = SkipGramConfig { seed: seeds.skipgram, ..cfg.skipgram.clone() };
                let emb = res.node_embedding(cfg.require_friendship, &walks, &skipgram)?;
                Some((SlotSpec::Vector { dim: emb.dim() }, emb))
            }
            None => None,
        };
        Ok(Featurizer { max_len: cfg.max_len, preprocessing: cfg.preprocessing, embed, sv, freq, graph })
    }

    /// Block shapes in canonical order.
    pub fn layout(&self) -> Vec<(BlockSlot, SlotSpec)> {
        let mut out = Vec::new();
        if let Some((s, _)) = &self.embed {
            out.push((BlockSlot::EmbedHead, s.clone()));
        }
        if let Some((s, _, _)) = &self.sv {
            out.push((BlockSlot::SvHead, s.clone()));
        }
        if let Some((s, _)) = &self.freq {
            out.push((BlockSlot::FreqPca, s.clone()));
        }
        if let Some((s, _)) = &self.graph {
            out.push((BlockSlot::GraphUser, s.clone()));
        }
        out
    }

    pub fn transform(&self, corpus: &Corpus) -> Result<Vec<FusionInput>> {
        let docs: Vec<Vec<String>> = corpus.iter().map(|t| preprocess(&t.text, self.preprocessing)).collect();
        let mut inputs = vec![FusionInput::new(); corpus.len()];
        let vocab = distinct_tokens(&docs);
        if let Some((_, table)) = &self.embed {
            let lookup = Arc::new(LookupTable::from_embeddings(table, &vocab));
            for (x, v) in inputs.iter_mut().zip(encode_all(&lookup, &docs, self.max_len)) {
                x.set(BlockSlot::EmbedHead, v);
            }
        }
        if let Some((_, sim, pca)) = &self.sv {
            let lookup = Arc::new(LookupTable::from_similarity(sim, &vocab, pca.as_ref())?);
            for (x, v) in inputs.iter_mut().zip(encode_all(&lookup, &docs, self.max_len)) {
                x.set(BlockSlot::SvHead, v);
            }
        }
        if let Some((spec, pipe)) = &self.freq {
            let reduced = pipe.transform(corpus, &docs)?;
            for (x, row) in inputs.iter_mut().zip(reduced.rows()) {
                let value = match spec {
                    SlotSpec::Sequence { len, .. } => {
                        let mut rows = Array2::zeros((*len, 1));
                        rows.column_mut(0).slice_mut(ndarray::s![..row.len()]).assign(&row);
                        let mask = (0..*len).map(|i| i < row.len()).collect();
                        BlockValue::Sequence(SequenceMatrix::new(rows, mask)?)
                    }
                    SlotSpec::Vector { .. } => BlockValue::Vector(row.to_owned()),
                };
                x.set(BlockSlot::FreqPca, value);
            }
        }
        if let Some((_, emb)) = &self.graph {
            for (x, t) in inputs.iter_mut().zip(corpus.iter()) {
                x.set(BlockSlot::GraphUser, BlockValue::Vector(user_vector(emb, &t.author_id)));
            }
        }
        Ok(inputs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub features_secs: f64,
    pub train_secs: f64,
    pub total_secs: f64,
}

/// Outcome of one configuration. `eval` scores the held-out split of the
/// training data; `test_t80` scores the test set with the model trained
/// on the split, `test_t100` with the model retrained on all training
/// data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: String,
    pub settings: String,
    pub config: RunConfig,
    pub eval: Scores,
    pub test_t80: Option<Scores>,
    pub test_t100: Option<Scores>,
    pub history: TrainHistory,
    pub seeds: RunSeeds,
    pub timing: Timing,
    pub versions: BTreeMap<String, String>,
    pub started_at: String,
}

impl RunResult {
    pub fn eval_f_avg(&self) -> f64 {
        self.eval.f_avg
    }

    /// T%100 when available, else T%80.
    pub fn test_f_avg(&self) -> Option<f64> {
        self.test_t100.as_ref().or(self.test_t80.as_ref()).map(|s| s.f_avg)
    }

    pub fn accuracy(&self) -> f64 {
        self.test_t100.as_ref().or(self.test_t80.as_ref()).unwrap_or(&self.eval).accuracy
    }
}

/// A run plus the per-instance test predictions behind its test score.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: RunResult,
    pub test_ids: Vec<String>,
    pub test_predictions: Vec<Prediction>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Stable id from the full config.
pub fn run_id(cfg: &RunConfig) -> Result<String> {
    Ok(format!("run-{:016x}", fnv1a(serde_json::to_string(cfg)?.as_bytes())))
}

fn labels_of(corpus: &Corpus) -> Result<Vec<StanceLabel>> {
    corpus.labels()
}

fn predict_labels(model: &FusionModel, xs: &[FusionInput]) -> Result<(Vec<Prediction>, Vec<StanceLabel>)> {
    let preds = model.predict_all(xs)?;
    let labels = preds.iter().map(|p| p.label).collect();
    Ok((preds, labels))
}

/// Features, heads, fusion, training and scoring for one config.
pub fn run(cfg: &RunConfig, res: &Resources) -> Result<RunResult> {
    run_detailed(cfg, res).map(|o| o.result)
}

pub fn run_detailed(cfg: &RunConfig, res: &Resources) -> Result<RunOutput> {
    run_inner(cfg, res).map_err(|e| Error::Run { settings: cfg.settings(), source: Box::new(e) })
}

fn run_inner(cfg: &RunConfig, res: &Resources) -> Result<RunOutput> {
    cfg.validate()?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let t0 = Instant::now();
    let seeds = RunSeeds::resolve(cfg);
    let all = res.train()?;
    let test = res.test()?.filter(|t| t.is_labeled());
    let (train, eval) = stratified_split(&all, cfg.split)?;
    let fusion_cfg = FusionConfig { active_blocks: cfg.active_blocks(), seed: seeds.fusion, ..cfg.fusion.clone() };

    let feats = Featurizer::fit(cfg, &train, res, &seeds)?;
    let xs = feats.transform(&train)?;
    let ex = feats.transform(&eval)?;
    let tx = test.as_ref().map(|t| feats.transform(t)).transpose()?;
    let mut timing = Timing { features_secs: t0.elapsed().as_secs_f64(), ..Timing::default() };

    let t1 = Instant::now();
    let (ys, ey) = (labels_of(&train)?, labels_of(&eval)?);
    let mut model = FusionModel::new(fusion_cfg.clone(), &feats.layout())?;
    let history = model.train(&xs, &ys, Some((&ex, &ey)))?;
    let eval_scores = score(&predict_labels(&model, &ex)?.1, &ey)?;
    let mut test_ids = Vec::new();
    let mut test_predictions = Vec::new();
    let mut test_t80 = None;
    if let (Some(t), Some(tx)) = (&test, &tx) {
        let (preds, labels) = predict_labels(&model, tx)?;
        test_t80 = Some(score(&labels, &labels_of(t)?)?);
        test_ids = t.iter().map(|tw| tw.id.clone()).collect();
        test_predictions = preds;
    }
    timing.train_secs = t1.elapsed().as_secs_f64();

    let mut test_t100 = None;
    if let (true, Some(t)) = (cfg.retrain_full, &test) {
        let t2 = Instant::now();
        let full = Featurizer::fit(cfg, &all, res, &seeds)?;
        let fx = full.transform(&all)?;
        let ftx = full.transform(t)?;
        timing.features_secs += t2.elapsed().as_secs_f64();
        let t3 = Instant::now();
        let mut retrained = FusionModel::new(fusion_cfg, &full.layout())?;
        retrained.train_epochs(&fx, &labels_of(&all)?, history.best_epochs.max(1))?;
        let (preds, labels) = predict_labels(&retrained, &ftx)?;
        test_t100 = Some(score(&labels, &labels_of(t)?)?);
        test_predictions = preds;
        timing.train_secs += t3.elapsed().as_secs_f64();
    }
    timing.total_secs = t0.elapsed().as_secs_f64();

    let versions = BTreeMap::from([
        ("stancelab".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("result_format".to_string(), "1".to_string()),
    ]);
    let result = RunResult {
        run_id: run_id(cfg)?,
        settings: cfg.settings(),
        config: cfg.clone(),
        eval: eval_scores,
        test_t80,
        test_t100,
        history,
        seeds,
        timing,
        versions,
        started_at,
    };
    log::info!(
        "{} eval f-avg {:.3} test f-avg {}",
        result.settings,
        result.eval.f_avg,
        result.test_f_avg().map_or("-".into(), |v| format!("{v:.3}"))
    );
    Ok(RunOutput { result, test_ids, test_predictions })
}

/// Writes `<dir>/<run_id>.json`; one file per run so concurrent runs never
/// share a file.
pub fn save_result(result: &RunResult, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("{}.json", result.run_id));
    fs::write(&path, serde_json::to_vec_pretty(result)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn load_result(path: impl AsRef<Path>) -> Result<RunResult> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Every `*.json` result in `dir`, in file-name order.
pub fn load_results(dir: impl AsRef<Path>) -> Result<Vec<RunResult>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(load_result).collect()
}
