use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{FreqBlock, RunConfig, SvBlock};
use super::runner::{run, Resources, RunResult};
use crate::freqfeat::FreqFeature;
use crate::gnnembed::WalkStrategy;
use crate::heads::HeadKind;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Toggle {
    Graph,
    Sv,
    Freq,
}

impl FromStr for Toggle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "graph" => Ok(Toggle::Graph),
            "sv" => Ok(Toggle::Sv),
            "freq" => Ok(Toggle::Freq),
            other => Err(Error::invalid(format!("unknown toggle `{other}` (expected graph, sv or freq)"))),
        }
    }
}

/// The config pair differing only in the toggled block: `(with, without)`.
/// A block already present is kept as is; a missing one gets a default
/// (DeepWalk, Conv2D over PCA(SVs), PCA(unigram + Tfidf_unigram + length)).
pub fn ablation_pair(cfg: &RunConfig, toggle: Toggle) -> Result<(RunConfig, RunConfig)> {
    let mut with = cfg.clone();
    let mut without = cfg.clone();
    match toggle {
        Toggle::Graph => {
            with.graph.get_or_insert(WalkStrategy::DeepWalk);
            without.graph = None;
        }
        Toggle::Sv => {
            with.sv.get_or_insert(SvBlock { head: HeadKind::Cnn2dMulti, pca: true });
            without.sv = None;
        }
        Toggle::Freq => {
            with.freq.get_or_insert_with(|| {
                FreqBlock::new(vec![FreqFeature::Unigram, FreqFeature::TfidfUnigram, FreqFeature::Length], None)
            });
            without.freq = None;
        }
    }
    with.validate()?;
    without.validate()?;
    Ok((with, without))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub toggle: Toggle,
    pub with: RunResult,
    pub without: RunResult,
}

impl AblationReport {
    /// Eval f-avg gained by adding the block.
    pub fn eval_delta(&self) -> f64 {
        self.with.eval.f_avg - self.without.eval.f_avg
    }

    /// Test f-avg gained by adding the block, when a test set was scored.
    pub fn test_delta(&self) -> Option<f64> {
        Some(self.with.test_f_avg()? - self.without.test_f_avg()?)
    }
}

pub fn ablate(cfg: &RunConfig, toggle: Toggle, res: &Resources) -> Result<AblationReport> {
    let (with, without) = ablation_pair(cfg, toggle)?;
    Ok(AblationReport { toggle, with: run(&with, res)?, without: run(&without, res)? })
}
