//! `dsre`: distantly supervised relation extraction pipeline. One binary,
//! one subcommand per pipeline stage; every artifact-writing run records a
//! replayable manifest first. Exit codes: 0 success, 1 run error, 2 usage.

mod commands;
mod hyper;
mod manifest;

use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};
use dsre_core::encoders::ModelKind;
use dsre_core::Result;

use manifest::{
    AttnExportSpec, BuildGdsSpec, EnsembleFitSpec, EvalSpec, PredictSpec, RepartitionSpec,
    RunSpec, StatsSpec, TrainSpec,
};

#[derive(Parser)]
#[command(
    name = "dsre",
    version,
    about = "Distantly supervised relation extraction: train, ensemble, evaluate, build datasets"
)]
struct Cli {
    /// Worker threads for read-only scoring phases
    #[arg(long, global = true, default_value_t = 1, value_name = "N")]
    threads: usize,
    /// Seed for all randomness; equal seeds reproduce runs bit-identically
    #[arg(long, global = true, default_value_t = 1, value_name = "N")]
    seed: u64,
    /// Flat key=value hyperparameter file (used by train; flags override it)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model on a bag corpus, early-stopping on dev AUC
    Train(TrainArgs),
    /// Score a test corpus with one checkpoint or the weighted ensemble
    Predict(PredictArgs),
    /// Precision/recall evaluation of a predictions file against gold labels
    Eval(EvalArgs),
    /// Fit ensemble blend weights on a dev corpus
    EnsembleFit(EnsembleFitArgs),
    /// Export per-token attention for one bag and relation
    AttnExport(AttnExportArgs),
    /// Build a distant-supervision dataset from seed facts and documents
    BuildGds(BuildGdsArgs),
    /// Re-split a bag corpus 80/20 into train and dev by entity pair
    Repartition(RepartitionArgs),
    /// Per-relation bag, pair and sentence counts for a bag corpus
    Stats(StatsArgs),
    /// Re-run a recorded manifest, reproducing its outputs byte-identically
    Replay(ReplayArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Architecture: pcnn, bgwa or ea
    #[arg(long, value_parser = ModelKind::parse)]
    model: ModelKind,
    /// Training bag corpus (JSONL)
    #[arg(long, value_name = "FILE")]
    train: PathBuf,
    /// Development bag corpus (JSONL)
    #[arg(long, value_name = "FILE")]
    dev: PathBuf,
    /// Output directory (model.json, epochs.csv)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    hyper: hyper::HyperFlags,
}

#[derive(Args)]
#[command(group = ArgGroup::new("source").args(["model", "models"]).required(true))]
struct PredictArgs {
    /// Single checkpoint to score with
    #[arg(long, value_name = "CKPT", conflicts_with = "ensemble")]
    model: Option<PathBuf>,
    /// The three member checkpoints, in pcnn, ea, bgwa order
    #[arg(long, num_args = 3, value_names = ["PCNN", "EA", "BGWA"], requires = "ensemble")]
    models: Option<Vec<PathBuf>>,
    /// Blend weights file written by ensemble-fit
    #[arg(long, value_name = "FILE", requires = "models")]
    ensemble: Option<PathBuf>,
    /// Test bag corpus (JSONL)
    #[arg(long, value_name = "FILE")]
    test: PathBuf,
    /// Output directory (predictions.tsv)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Ranked predictions TSV written by predict
    #[arg(long, value_name = "FILE")]
    predictions: PathBuf,
    /// Test bag corpus carrying the gold labels (JSONL)
    #[arg(long, value_name = "FILE")]
    test: PathBuf,
    /// Precision-at-N cutoffs for report.txt
    #[arg(long, value_delimiter = ',', default_value = "100,200,300", value_name = "N,..")]
    p_at: Vec<usize>,
    /// Keep only pr.csv points with recall at most this (plot cap)
    #[arg(long, value_name = "R")]
    max_recall: Option<f64>,
    /// Integrate the reported AUC only up to this recall
    #[arg(long, value_name = "R")]
    auc_max_recall: Option<f64>,
    /// Output directory (pr.csv, report.txt)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct EnsembleFitArgs {
    /// PCNN member checkpoint
    #[arg(long, value_name = "CKPT")]
    pcnn: PathBuf,
    /// Entity-attention member checkpoint
    #[arg(long, value_name = "CKPT")]
    ea: PathBuf,
    /// Word-attention member checkpoint
    #[arg(long, value_name = "CKPT")]
    bgwa: PathBuf,
    /// Development bag corpus the weights are fit on (JSONL)
    #[arg(long, value_name = "FILE")]
    dev: PathBuf,
    /// Output directory (weights.txt)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct AttnExportArgs {
    /// Checkpoint of an attention model (bgwa or ea)
    #[arg(long, value_name = "CKPT")]
    model: PathBuf,
    /// Bag corpus containing the bag (JSONL)
    #[arg(long, value_name = "FILE")]
    bags: PathBuf,
    /// Bag id to export
    #[arg(long, value_name = "ID")]
    bag: String,
    /// Relation name whose selected instance is exported
    #[arg(long, value_name = "NAME")]
    relation: String,
    /// Output directory (attention.csv)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct BuildGdsArgs {
    /// Seed facts, one per line (JSONL)
    #[arg(long, value_name = "FILE")]
    seeds: PathBuf,
    /// Document collection to mine snippets from (JSONL)
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Train,dev,test sentence-count fractions
    #[arg(long, value_delimiter = ',', default_value = "0.6,0.1,0.3", value_name = "T,D,E")]
    ratios: Vec<f64>,
    /// Entity occurrences co-occur within this many tokens
    #[arg(long, default_value_t = 500, value_name = "N")]
    cooccur_window: usize,
    /// Snippet length cap in tokens
    #[arg(long, default_value_t = 500, value_name = "N")]
    snippet_len: usize,
    /// Output directory (train/dev/test.jsonl, stats.txt)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct RepartitionArgs {
    /// Bag corpus to split (JSONL)
    #[arg(long, value_name = "FILE")]
    bags: PathBuf,
    /// Output directory (train.jsonl, dev.jsonl)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    /// Bag corpus to summarize (JSONL)
    #[arg(long, value_name = "FILE")]
    bags: PathBuf,
    /// Optional output directory (stats.txt); without it, print only
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    /// manifest.json of an earlier run
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Write outputs here instead of the recorded directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn warn_unused_config(config: &Option<PathBuf>) {
    if let Some(path) = config {
        eprintln!(
            "warning: --config {} only affects train; ignored",
            path.display()
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let threads = cli.threads.max(1);
    match cli.command {
        Command::Train(a) => {
            let config = hyper::resolve(cli.config.as_deref(), &a.hyper)?;
            let spec = RunSpec::Train(TrainSpec {
                model: a.model,
                train: a.train,
                dev: a.dev,
                config,
            });
            commands::run_with_manifest(spec, seed, threads, &a.out)
        }
        Command::Predict(a) => {
            warn_unused_config(&cli.config);
            let spec = RunSpec::Predict(PredictSpec {
                model: a.model,
                models: a.models,
                ensemble: a.ensemble,
                test: a.test,
            });
            commands::run_with_manifest(spec, seed, threads, &a.out)
        }
        Command::Eval(a) => {
            warn_unused_config(&cli.config);
            let spec = RunSpec::Eval(EvalSpec {
                predictions: a.predictions,
                test: a.test,
                p_at: a.p_at,
                max_recall: a.max_recall,
                auc_max_recall: a.auc_max_recall,
            });
            commands::run_with_manifest(spec, seed, threads, &a.out)
        }
        Command::EnsembleFit(a) => {
            warn_unused_config(&cli.config);
            let spec = RunSpec::EnsembleFit(EnsembleFitSpec {
                pcnn: a.pcnn,
                ea: a.ea,
                bgwa: a.bgwa,
                dev: a.dev,
            });
            commands::run_with_manifest(spec, seed, threads, &a.out)
        }
        Command::AttnExport(a) => {
            warn_unused_config(&cli.config);
            let spec = RunSpec::AttnExport(AttnExportSpec {
                model: a.model,
                bags: a.bags,
                bag: a.bag,
                relation: a.relation,
            });
            commands::run_with_manifest(spec, seed, threads, &a.out)
        }
        Command::BuildGds(a) => {
            warn_unused_config(&cli.config);
            let spec = RunSpec::BuildGds(BuildGdsSpec {
                seeds: a.seeds,
                corpus: a.corpus,
                ratios: a.ratios,
                cooccur_window: a.cooccur_window,
                snippet_len: a.snippet_len,
            });
            commands::run_with_manifest(spec, seed, threads, &a.out)
        }
        Command::Repartition(a) => {
            warn_unused_config(&cli.config);
            let spec = RunSpec::Repartition(RepartitionSpec { bags: a.bags });
            commands::run_with_manifest(spec, seed, threads, &a.out)
        }
        Command::Stats(a) => {
            warn_unused_config(&cli.config);
            match a.out {
                Some(out) => {
                    commands::run_with_manifest(RunSpec::Stats(StatsSpec { bags: a.bags }), seed, threads, &out)
                }
                None => {
                    let bags = dsre_core::corpus::load_raw_bags(&a.bags)?;
                    let table = commands::stats::render(&dsre_core::gds::dataset_stats(&bags));
                    print!("{table}");
                    Ok(())
                }
            }
        }
        Command::Replay(a) => {
            warn_unused_config(&cli.config);
            commands::replay(&a.manifest, a.out.as_deref())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
