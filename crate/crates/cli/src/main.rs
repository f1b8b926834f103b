mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Detect and localize AI-competition frames in news text.
#[derive(Debug, Parser)]
#[command(name = "framedetect", version)]
struct Cli {
    /// JSON configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every training and sampling step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pipeline bundle used by `detect` and `report`.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Task {
    /// DocContainsFrame over document features.
    Doc,
    /// ParContainsFrame over paragraph features.
    Paragraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalTask {
    Doc,
    Paragraph,
    /// ParContainsFrame with the self-attention model.
    Attention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Unit vectors learned during embedding training.
    Trained,
    /// Vectors from `infer_vector`.
    Infer,
}

#[derive(Debug, Args)]
struct FeatureArgs {
    /// Paragraph-vector model (`train-embed` output).
    #[arg(long, conflicts_with = "unit_embeddings")]
    embed: Option<PathBuf>,
    /// Precomputed unit embeddings (JSONL keyed by `doc` / `doc#paragraph` ids).
    #[arg(long)]
    unit_embeddings: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Trained)]
    mode: Mode,
    /// Use only paragraphs of documents labelled DocContainsFrame.
    #[arg(long)]
    frame_docs_only: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a JSONL corpus and print label statistics.
    Ingest {
        corpus: PathBuf,
        /// Skip invalid records instead of failing.
        #[arg(long)]
        lenient: bool,
        /// Print statistics as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Generate a synthetic labelled corpus.
    Synth {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        docs: Option<usize>,
        /// Negative to positive document ratio.
        #[arg(long)]
        ratio: Option<f64>,
        /// Negative to positive paragraph ratio.
        #[arg(long)]
        paragraph_ratio: Option<f64>,
    },
    /// Train paragraph vectors over every document and paragraph of a corpus.
    TrainEmbed {
        corpus: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// dbow or dm.
        #[arg(long)]
        arch: Option<String>,
        /// hs or neg.
        #[arg(long)]
        objective: Option<String>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        min_count: Option<u64>,
    },
    /// Train a document or paragraph classifier.
    TrainClf {
        corpus: PathBuf,
        #[arg(long, value_enum)]
        task: Task,
        #[command(flatten)]
        features: FeatureArgs,
        /// lr, svm, rf or mlp; defaults to the config's classifier for the task.
        #[arg(long)]
        classifier: Option<String>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train the (guided) self-attention paragraph model.
    TrainAttn {
        corpus: PathBuf,
        /// Word vectors as `token f1 ... fd` lines; random vectors when absent.
        #[arg(long)]
        word_embeddings: Option<PathBuf>,
        /// Weight of the attention guidance term (0 disables guidance).
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        frame_docs_only: bool,
        #[arg(short, long)]
        out: PathBuf,
        /// Per-epoch training log (JSON lines).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Search a classifier family's grid by stratified k-fold macro-F1.
    GridSearch {
        corpus: PathBuf,
        #[arg(long, value_enum)]
        task: Task,
        #[command(flatten)]
        features: FeatureArgs,
        #[arg(long)]
        classifier: String,
        #[arg(long)]
        folds: Option<usize>,
        /// Where to save the refit best model.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Where to write per-configuration scores (JSON).
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Repeated stratified k-fold evaluation; prints a table, optionally writes JSON.
    Evaluate {
        corpus: PathBuf,
        #[arg(long, value_enum)]
        task: EvalTask,
        #[command(flatten)]
        features: FeatureArgs,
        #[arg(long)]
        classifier: Option<String>,
        #[arg(long)]
        word_embeddings: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Assemble trained components into a pipeline bundle.
    Bundle {
        #[arg(long, conflicts_with = "unit_embeddings")]
        embed: Option<PathBuf>,
        #[arg(long)]
        unit_embeddings: Option<PathBuf>,
        #[arg(long)]
        doc_clf: PathBuf,
        /// Classical paragraph classifier.
        #[arg(long, conflicts_with = "attn", required_unless_present = "attn")]
        par_clf: Option<PathBuf>,
        /// Attention paragraph model.
        #[arg(long)]
        attn: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run the pipeline over JSONL documents (`-` for stdin/stdout).
    Detect {
        #[arg(long, default_value = "-")]
        input: PathBuf,
        #[arg(long, default_value = "-")]
        output: PathBuf,
        /// Skip unparsable documents instead of failing.
        #[arg(long)]
        lenient: bool,
    },
    /// Write an HTML attention report.
    Report {
        /// Documents (JSONL).
        #[arg(long)]
        input: PathBuf,
        /// Saved `detect` output; when absent the pipeline is run with `--model`.
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
