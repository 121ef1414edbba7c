use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use stancelab::experiment::{
    ablate, apply_settings, load_results, report, run_detailed, sample_config, save_result, thread_cap,
    write_synthetic, ConfigSpace, ReportFormat, Resources, RunConfig, SynthSpec, Toggle,
};
use stancelab::fusion::write_predictions;
use stancelab::gnnembed::{
    generate_walks, read_walks, save_node_embedding, train_skipgram, validate_walk_file, write_walks, SkipGramConfig,
    WalkConfig, WalkStrategy,
};
use stancelab::netgraph::{build_graph, graph_stats, load_edge_list, load_relations, write_edge_list};
use stancelab::{Error, Result};

#[derive(Parser)]
#[command(name = "stancelab", version, about = "Multi-view stance detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration end to end.
    Run {
        /// JSON config file or a settings string such as
        /// "Conv2D(FastText) + Conv2D(PCA(SVs)) + DeepWalk".
        #[arg(long)]
        config: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Overrides the master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Random search: sample and run `n` configurations.
    Search {
        /// JSON config space; the built-in space when omitted.
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Render saved results as a table.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
    },
    /// Run a config with and without one block.
    Ablate {
        #[arg(long)]
        config: String,
        #[arg(long)]
        toggle: Toggle,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Write the synthetic homophily corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// JSON spec; defaults apply to missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build the interaction graph from relation records and write it as an
    /// edge list (`src dst weight`).
    Graph {
        #[arg(long)]
        relations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep pairs without a friend record.
        #[arg(long)]
        no_friendship: bool,
    },
    /// Generate random walks over an edge list.
    Walks {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "deepwalk")]
        strategy: WalkStrategy,
        #[arg(long, default_value_t = 10)]
        walks_per_node: usize,
        #[arg(long, default_value_t = 80)]
        walk_length: usize,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check a walk file against the walk-file contract.
    ValidateWalks {
        #[arg(long)]
        walks: PathBuf,
        /// Edge list whose nodes and edges the walks must use.
        #[arg(long)]
        edges: Option<PathBuf>,
        #[arg(long, default_value_t = 80)]
        max_len: usize,
    },
    /// Train node vectors from a walk file.
    Embed {
        #[arg(long)]
        walks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 128)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// A path to an existing file is read as JSON; anything else is a
/// settings string applied to the default config.
fn load_config(arg: &str) -> Result<RunConfig> {
    let path = Path::new(arg);
    if path.is_file() {
        read_json(path)
    } else {
        apply_settings(&RunConfig::default(), arg)
    }
}

fn execute(cfg: &RunConfig, res: &Resources, out: &Path) -> Result<stancelab::experiment::RunResult> {
    let output = run_detailed(cfg, res)?;
    let path = save_result(&output.result, out)?;
    if !output.test_ids.is_empty() {
        let preds = out.join(format!("{}.predictions.csv", output.result.run_id));
        write_predictions(&preds, &output.test_ids, &output.test_predictions)?;
    }
    log::info!("wrote {}", path.display());
    Ok(output.result)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.3}"))
}

fn main_inner(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, data, out, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let r = execute(&cfg, &Resources::new(data), &out)?;
            println!(
                "{}\teval f-avg {:.3}\tT%80 {}\tT%100 {}",
                r.settings,
                r.eval.f_avg,
                fmt_opt(r.test_t80.as_ref().map(|s| s.f_avg)),
                fmt_opt(r.test_t100.as_ref().map(|s| s.f_avg))
            );
        }
        Command::Search { space, n, seed, data, out } => {
            let space: ConfigSpace = match space {
                Some(p) => read_json(&p)?,
                None => ConfigSpace::default(),
            };
            let configs = (0..n as u64)
                .map(|i| {
                    let mut cfg = sample_config(&space, seed.wrapping_add(i))?;
                    cfg.seed = seed.wrapping_add(i);
                    Ok(cfg)
                })
                .collect::<Result<Vec<_>>>()?;
            let res = Resources::new(data);
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(thread_cap())
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let outcomes: Vec<Result<_>> = pool.install(|| configs.par_iter().map(|c| execute(c, &res, &out)).collect());
            let mut results = Vec::new();
            for o in outcomes {
                match o {
                    Ok(r) => results.push(r),
                    Err(e) => log::error!("{e}"),
                }
            }
            println!("{} of {n} runs finished", results.len());
            if !results.is_empty() {
                print!("{}", report(&results, ReportFormat::Markdown)?);
            }
        }
        Command::Report { input, format } => {
            print!("{}", report(&load_results(&input)?, format)?);
        }
        Command::Ablate { config, toggle, data, out } => {
            let cfg = load_config(&config)?;
            let rep = ablate(&cfg, toggle, &Resources::new(data))?;
            for r in [&rep.with, &rep.without] {
                save_result(r, &out)?;
            }
            println!("with:    {}\teval {:.3}\ttest {}", rep.with.settings, rep.with.eval.f_avg, fmt_opt(rep.with.test_f_avg()));
            println!(
                "without: {}\teval {:.3}\ttest {}",
                rep.without.settings,
                rep.without.eval.f_avg,
                fmt_opt(rep.without.test_f_avg())
            );
            println!("delta:   eval {:+.3}\ttest {}", rep.eval_delta(), rep.test_delta().map_or("-".into(), |d| format!("{d:+.3}")));
        }
        Command::Synth { out, spec, seed } => {
            let mut spec: SynthSpec = match spec {
                Some(p) => read_json(&p)?,
                None => SynthSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let s = write_synthetic(&spec, &out)?;
            println!("train {} test {} users {} relations {}", s.train, s.test, s.users, s.relations);
        }
        Command::Graph { relations, out, no_friendship } => {
            let g = build_graph(&load_relations(&relations)?, !no_friendship);
            write_edge_list(&g, &out)?;
            let s = graph_stats(&g);
            println!(
                "nodes {} edges {} avg in-degree {:.4} avg out-degree {:.4}",
                s.node_count, s.edge_count, s.avg_in_degree, s.avg_out_degree
            );
        }
        Command::Walks { edges, out, strategy, walks_per_node, walk_length, p, q, seed } => {
            let g = load_edge_list(&edges)?;
            let cfg = WalkConfig { strategy, walks_per_node, walk_length, p, q, seed, ..WalkConfig::default() };
            let walks = generate_walks(&g, &cfg)?;
            write_walks(&walks, &out)?;
            println!("{} walks, {} ids", walks.len(), walks.token_count());
        }
        Command::ValidateWalks { walks, edges, max_len } => {
            let g = edges.map(|e| load_edge_list(&e)).transpose()?;
            let n = validate_walk_file(&walks, g.as_ref(), max_len, g.is_some())?;
            println!("{n} walks ok");
        }
        Command::Embed { walks, out, dim, window, epochs, seed } => {
            let corpus = read_walks(&walks)?;
            let cfg = SkipGramConfig { dim, window, epochs, seed, ..SkipGramConfig::default() };
            let (emb, report) = train_skipgram(&corpus, &cfg)?;
            save_node_embedding(&emb, &out)?;
            println!("{} vectors, final epoch loss {}", emb.ids().len(), fmt_opt(report.epoch_losses.last().copied()));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
