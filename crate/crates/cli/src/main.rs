//! Batch command-line driver. Exit codes: 0 success, 1 verification failure,
//! 2 input or configuration error.

mod config;
mod ops;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use ops::{SampleOrder, TrainOverrides};

#[derive(Parser)]
#[command(name = "bornseq", version, about = "Sequence Born machine with trainable measurement embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file; writes checkpoint, history, manifest
    Train(TrainArgs),
    /// Generate sequences from a checkpoint
    Sample(SampleCmdArgs),
    /// Score held-out data and export model-vs-data statistics
    Eval(EvalArgs),
    /// Verify model invariants of a checkpoint
    Check(CheckArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the data path
    #[arg(long)]
    data: Option<PathBuf>,
    /// Override the number of epochs
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct SampleCmdArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Number of sequences to generate
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// Site visiting order: forward, reverse, random, or explicit
    #[arg(long, default_value = "forward")]
    order: SampleOrder,
    /// Comma-separated site permutation (with --order explicit)
    #[arg(long)]
    order_sites: Option<String>,
    /// Completion template: vocabulary letters with '?' for holes
    #[arg(long)]
    mask: Option<String>,
    /// Fill mask holes by argmax instead of sampling
    #[arg(long)]
    greedy: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output FASTA path
    #[arg(long, default_value = "samples.fasta")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// FASTA file to score
    #[arg(long)]
    data: PathBuf,
    /// Output directory for metrics.json and scatter.csv
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    checkpoint: PathBuf,
}

impl clap::builder::ValueParserFactory for SampleOrder {
    type Parser = clap::builder::ValueParser;
    fn value_parser() -> Self::Parser {
        clap::builder::ValueParser::new(|s: &str| s.parse::<SampleOrder>().map_err(|e| e.to_string()))
    }
}

fn configure_threads() {
    // BORNSEQ_THREADS caps internal parallelism; 0 or unset means automatic.
    if let Ok(value) = std::env::var("BORNSEQ_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn run() -> Result<i32> {
    let cli = Cli::parse();
    configure_threads();
    match cli.command {
        Command::Train(args) => ops::cmd_train(
            &args.config,
            TrainOverrides {
                seed: args.seed,
                out: args.out,
                data: args.data,
                epochs: args.epochs,
            },
        ),
        Command::Sample(args) => ops::cmd_sample(ops::SampleArgs {
            checkpoint: args.checkpoint,
            count: args.count,
            order: args.order,
            order_sites: args.order_sites,
            mask: args.mask,
            greedy: args.greedy,
            seed: args.seed,
            out: args.out,
        }),
        Command::Eval(args) => ops::cmd_eval(&args.checkpoint, &args.data, &args.out),
        Command::Check(args) => ops::cmd_check(&args.checkpoint),
    }
}

fn main() {
    match run() {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {:#}", err);
            std::process::exit(2);
        }
    }
}
