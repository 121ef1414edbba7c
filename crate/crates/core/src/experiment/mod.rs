//! Run configuration, settings strings, random search, the end-to-end
//! runner, reports and the synthetic homophily corpus.

mod ablation;
mod config;
mod metrics;
mod report;
mod runner;
mod settings;
mod synth;

pub use ablation::{ablate, ablation_pair, AblationReport, Toggle};
pub use config::{sample_config, ConfigSpace, EmbedBlock, FreqBlock, RunConfig, SvBlock, MAX_REDRAWS};
pub use metrics::{f_avg, score, BaselineConstants, ClassScores, Scores, BASELINES};
pub use report::{load_report_csv, render, report, report_rows, ReportFormat, ReportRow, BASELINE_LABEL};
pub use runner::{
    load_result, load_results, run, run_detailed, run_id, save_result, Featurizer, Resources, RunOutput, RunResult,
    RunSeeds, Timing,
};
pub use settings::{apply_settings, format_settings, normalize_settings, parse_settings};
pub use synth::{write_synthetic, SynthSpec, SynthSummary};

/// Worker count for parallel runs: `STANCELAB_THREADS` when set to a
/// positive integer, else all cores.
pub fn thread_cap() -> usize {
    std::env::var("STANCELAB_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
