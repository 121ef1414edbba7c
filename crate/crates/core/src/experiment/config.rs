use serde::{Deserialize, Serialize};

use crate::corpus::{PreprocessMode, SplitSpec};
use crate::embedfeat::EmbeddingSource;
use crate::freqfeat::FreqFeature;
use crate::fusion::{BlockSlot, FusionConfig};
use crate::gnnembed::{SkipGramConfig, WalkConfig, WalkStrategy};
use crate::heads::{HeadConfig, HeadKind};
use crate::{Error, Result};

/// A head over pretrained word embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedBlock {
    pub head: HeadKind,
    pub source: EmbeddingSource,
}

/// A head over similarity vectors, optionally PCA-reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SvBlock {
    pub head: HeadKind,
    pub pca: bool,
}

/// PCA-reduced frequency features, used directly or through a head that
/// reads the reduced vector as a `k x 1` sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreqBlock {
    pub features: Vec<FreqFeature>,
    pub head: Option<HeadKind>,
}

impl FreqBlock {
    pub fn new(mut features: Vec<FreqFeature>, head: Option<HeadKind>) -> Self {
        features.sort();
        features.dedup();
        FreqBlock { features, head }
    }
}

/// Everything needed to reproduce one run. The architecture fields map
/// one-to-one onto settings strings; the rest are module defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub embed: Option<EmbedBlock>,
    pub sv: Option<SvBlock>,
    pub freq: Option<FreqBlock>,
    pub graph: Option<WalkStrategy>,
    /// Base space for similarity vectors; defaults to the embed source,
    /// then FastText.
    pub sv_source: Option<EmbeddingSource>,
    pub preprocessing: PreprocessMode,
    pub max_len: usize,
    pub sv_pca_k: usize,
    /// Cap on similarity anchors (most frequent training words).
    pub sv_max_anchors: Option<usize>,
    pub freq_pca_k: usize,
    /// Cap on unigram and char n-gram vocabularies.
    pub max_terms: Option<usize>,
    pub chargram_range: (usize, usize),
    pub split: SplitSpec,
    /// Master seed for model init, dropout, walks and skip-gram.
    pub seed: u64,
    pub heads: HeadConfig,
    pub walks: WalkConfig,
    pub skipgram: SkipGramConfig,
    pub fusion: FusionConfig,
    pub require_friendship: bool,
    /// Also retrain on all training data and score the test set.
    pub retrain_full: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            embed: Some(EmbedBlock { head: HeadKind::Cnn2dMulti, source: EmbeddingSource::FasttextIt }),
            sv: Some(SvBlock { head: HeadKind::Cnn2dMulti, pca: true }),
            freq: Some(FreqBlock::new(
                vec![FreqFeature::Unigram, FreqFeature::TfidfUnigram, FreqFeature::Length],
                None,
            )),
            graph: Some(WalkStrategy::DeepWalk),
            sv_source: None,
            preprocessing: PreprocessMode::TwitaClean,
            max_len: 64,
            sv_pca_k: 100,
            sv_max_anchors: Some(5000),
            freq_pca_k: 100,
            max_terms: Some(5000),
            chargram_range: (2, 5),
            split: SplitSpec::default(),
            seed: 0,
            heads: HeadConfig::default(),
            walks: WalkConfig::default(),
            skipgram: SkipGramConfig::default(),
            fusion: FusionConfig::default(),
            require_friendship: true,
            retrain_full: true,
        }
    }
}

impl RunConfig {
    pub fn has_text_block(&self) -> bool {
        self.embed.is_some() || self.sv.is_some() || self.freq.as_ref().is_some_and(|f| !f.features.is_empty())
    }

    pub fn active_blocks(&self) -> Vec<BlockSlot> {
        let mut b = Vec::new();
        if self.embed.is_some() {
            b.push(BlockSlot::EmbedHead);
        }
        if self.sv.is_some() {
            b.push(BlockSlot::SvHead);
        }
        if self.freq.is_some() {
            b.push(BlockSlot::FreqPca);
        }
        if self.graph.is_some() {
            b.push(BlockSlot::GraphUser);
        }
        b
    }

    /// Whether the interaction graph is needed (user vectors or community
    /// features).
    pub fn needs_graph(&self) -> bool {
        self.graph.is_some()
            || self.freq.as_ref().is_some_and(|f| f.features.iter().any(|x| x.uses_graph()))
    }

    pub fn sv_base(&self) -> EmbeddingSource {
        self.sv_source.or(self.embed.map(|e| e.source)).unwrap_or(EmbeddingSource::FasttextIt)
    }

    pub fn head_config(&self, kind: HeadKind) -> HeadConfig {
        HeadConfig { kind, ..self.heads.clone() }
    }

    pub fn settings(&self) -> String {
        super::format_settings(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.has_text_block() {
            return Err(Error::Settings(format!(
                "`{}` has no text block; add a head over an embedding, SVs or PCA(features)",
                self.settings()
            )));
        }
        if let Some(f) = &self.freq {
            if f.features.is_empty() {
                return Err(Error::Settings("PCA() needs at least one frequency feature".into()));
            }
        }
        if self.max_len == 0 || self.sv_pca_k == 0 || self.freq_pca_k == 0 {
            return Err(Error::invalid("max_len, sv_pca_k and freq_pca_k must be at least 1"));
        }
        self.heads.validate()?;
        self.walks.validate()?;
        self.skipgram.validate()?;
        FusionConfig { active_blocks: self.active_blocks(), ..self.fusion.clone() }.validate()?;
        let mut seq_heads = vec![];
        if let Some(e) = self.embed {
            seq_heads.push((e.head, self.max_len));
        }
        if let Some(s) = self.sv {
            seq_heads.push((s.head, self.max_len));
        }
        if let Some(h) = self.freq.as_ref().and_then(|f| f.head) {
            seq_heads.push((h, self.freq_pca_k));
        }
        for (kind, len) in seq_heads {
            self.head_config(kind).output_dim(len)?;
        }
        if !(self.split.train_ratio > 0.0 && self.split.train_ratio < 1.0) {
            return Err(Error::invalid(format!("train_ratio must lie in (0, 1), got {}", self.split.train_ratio)));
        }
        Ok(())
    }
}

/// Independent axes for random search. Every axis must be non-empty;
/// `None` entries switch the corresponding block off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfigSpace {
    pub embed_head: Vec<Option<HeadKind>>,
    pub embedding: Vec<EmbeddingSource>,
    pub sv_head: Vec<Option<HeadKind>>,
    pub sv_pca: Vec<bool>,
    pub freq_features: Vec<Vec<FreqFeature>>,
    pub freq_head: Vec<Option<HeadKind>>,
    pub graph: Vec<Option<WalkStrategy>>,
    pub preprocessing: Vec<PreprocessMode>,
    /// Template for every non-architecture field.
    pub base: RunConfig,
}

impl Default for ConfigSpace {
    fn default() -> Self {
        let heads = || std::iter::once(None).chain(HeadKind::ALL.map(Some)).collect::<Vec<_>>();
        ConfigSpace {
            embed_head: heads(),
            embedding: EmbeddingSource::ALL[..5].to_vec(),
            sv_head: heads(),
            sv_pca: vec![true, false],
            freq_features: std::iter::once(vec![]).chain(FreqFeature::ALL.map(|f| vec![f])).collect(),
            freq_head: vec![None, Some(HeadKind::Cnn2dMulti)],
            graph: std::iter::once(None).chain(WalkStrategy::ALL.map(Some)).collect(),
            preprocessing: vec![PreprocessMode::TwitaClean, PreprocessMode::None],
            base: RunConfig::default(),
        }
    }
}

impl ConfigSpace {
    /// A space holding exactly `cfg`.
    pub fn singleton(cfg: &RunConfig) -> Self {
        ConfigSpace {
            embed_head: vec![cfg.embed.map(|e| e.head)],
            embedding: vec![cfg.embed.map_or(EmbeddingSource::FasttextIt, |e| e.source)],
            sv_head: vec![cfg.sv.map(|s| s.head)],
            sv_pca: vec![cfg.sv.is_none_or(|s| s.pca)],
            freq_features: vec![cfg.freq.as_ref().map(|f| f.features.clone()).unwrap_or_default()],
            freq_head: vec![cfg.freq.as_ref().and_then(|f| f.head)],
            graph: vec![cfg.graph],
            preprocessing: vec![cfg.preprocessing],
            base: cfg.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let axes = [
            ("embed_head", self.embed_head.len()),
            ("embedding", self.embedding.len()),
            ("sv_head", self.sv_head.len()),
            ("sv_pca", self.sv_pca.len()),
            ("freq_features", self.freq_features.len()),
            ("freq_head", self.freq_head.len()),
            ("graph", self.graph.len()),
            ("preprocessing", self.preprocessing.len()),
        ];
        match axes.iter().find(|(_, n)| *n == 0) {
            Some((name, _)) => Err(Error::invalid(format!("config space axis `{name}` is empty"))),
            None => Ok(()),
        }
    }
}

/// Redraw budget before a space is declared exhausted.
pub const MAX_REDRAWS: usize = 1000;

/// Uniform draw per axis; combinations that fail validation (for example
/// no text block, or a frequency head without features) are redrawn.
pub fn sample_config(space: &ConfigSpace, seed: u64) -> Result<RunConfig> {
    use rand::seq::IndexedRandom;
    space.validate()?;
    let mut rng = crate::rng::seeded(seed);
    for _ in 0..MAX_REDRAWS {
        let pick = |r: &mut crate::rng::Rng| -> RunConfig {
            let mut cfg = space.base.clone();
            let embed_head = *space.embed_head.choose(r).expect("non-empty");
            let source = *space.embedding.choose(r).expect("non-empty");
            let sv_head = *space.sv_head.choose(r).expect("non-empty");
            let sv_pca = *space.sv_pca.choose(r).expect("non-empty");
            let features = space.freq_features.choose(r).expect("non-empty").clone();
            let freq_head = *space.freq_head.choose(r).expect("non-empty");
            cfg.graph = *space.graph.choose(r).expect("non-empty");
            cfg.preprocessing = *space.preprocessing.choose(r).expect("non-empty");
            cfg.embed = embed_head.map(|head| EmbedBlock { head, source });
            cfg.sv = sv_head.map(|head| SvBlock { head, pca: sv_pca });
            cfg.freq = (!features.is_empty() || freq_head.is_some()).then(|| FreqBlock::new(features, freq_head));
            cfg
        };
        let cfg = pick(&mut rng);
        if cfg.validate().is_ok() {
            return Ok(cfg);
        }
    }
    Err(Error::SpaceExhausted(MAX_REDRAWS))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips_json() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), cfg);
        let partial: RunConfig = serde_json::from_str(r#"{"seed": 4, "graph": null}"#).unwrap();
        assert_eq!(partial.seed, 4);
        assert_eq!(partial.graph, None);
        assert_eq!(partial.max_len, 64);
    }

    #[test]
    fn graph_only_is_rejected() {
        let cfg = RunConfig { embed: None, sv: None, freq: None, ..Default::default() };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("no text block"), "{err}");
    }

    #[test]
    fn singleton_space_yields_its_config() {
        let cfg = RunConfig { graph: None, seed: 3, ..Default::default() };
        let space = ConfigSpace::singleton(&cfg);
        assert_eq!(sample_config(&space, 1).unwrap(), cfg);
        assert_eq!(sample_config(&space, 99).unwrap(), cfg);
    }

    #[test]
    fn sampling_is_seeded_and_balanced() {
        let space = ConfigSpace::default();
        assert_eq!(sample_config(&space, 5).unwrap(), sample_config(&space, 5).unwrap());
        let mut space = ConfigSpace::singleton(&RunConfig::default());
        space.graph = vec![None, Some(WalkStrategy::DeepWalk)];
        let with_graph = (0..1000).filter(|&s| sample_config(&space, s).unwrap().graph.is_some()).count();
        assert!((450..=550).contains(&with_graph), "{with_graph}");
    }

    #[test]
    fn impossible_space_is_exhausted() {
        let mut space = ConfigSpace::singleton(&RunConfig::default());
        space.embed_head = vec![None];
        space.sv_head = vec![None];
        space.freq_features = vec![vec![]];
        space.freq_head = vec![None];
        assert!(matches!(sample_config(&space, 0), Err(Error::SpaceExhausted(MAX_REDRAWS))));
    }
}
