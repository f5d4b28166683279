mod commands;
mod output;
mod svg;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use desceval::ErrorClass;

use commands::{AccuracyArgs, AlignArgs, ClipSimArgs, GenCommand, PoolArgs, TrackArgs};

/// Descriptor-set quality metrics over precomputed embeddings.
///
/// Embedding inputs are EMB1 files. Descriptor sets are JSON objects mapping
/// class names to descriptor lists. Exit codes: 0 success, 2 usage or
/// configuration error, 3 data or format error, 4 metric undefined.
#[derive(Debug, Parser)]
#[command(name = "desceval", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mutual-kNN alignment of the descriptor-induced image space with a reference space.
    Align(AlignArgs),
    /// Similarity of descriptors to their nearest pre-training captions.
    Clipsim(ClipSimArgs),
    /// Zero-shot classification accuracy by description.
    Accuracy(AccuracyArgs),
    /// Accuracy and caption similarity over a series of descriptor checkpoints.
    Track(TrackArgs),
    /// Generate a baseline descriptor set.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Write the descriptor texts to embed, one per line, in the row order
    /// the other commands expect.
    Pool(PoolArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Align(a) => commands::align(a),
        Command::Clipsim(a) => commands::clipsim(a),
        Command::Accuracy(a) => commands::accuracy(a),
        Command::Track(a) => commands::track(a),
        Command::Gen(g) => commands::gen(g),
        Command::Pool(a) => commands::pool(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let class = e.chain().find_map(|c| c.downcast_ref::<desceval::Error>()).map(|e| e.class());
    match class {
        Some(ErrorClass::Config) => 2,
        Some(ErrorClass::MetricUndefined) => 4,
        Some(ErrorClass::Data) | None => 3,
    }
}
