//! `cnlaug`: corpus statistics, CNLC conversion, augmentation and
//! evaluation from the command line.
//!
//! Exit status is 0 on success, 1 on a runtime failure and 2 on invalid
//! input or configuration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cnlaug", version, about = "Nested NER corpus augmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options for reading a corpus.
#[derive(Args, Clone)]
pub struct CorpusOpts {
    /// jsonl or inline; guessed from the extension when absent
    #[arg(long)]
    pub format: Option<String>,
    /// Comma-separated label set
    #[arg(long)]
    pub labels: Option<String>,
    /// Stopword list, one lowercase word per line
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Deepest nesting accepted, or `none`
    #[arg(long)]
    pub max_depth: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sentence and entity counts
    Stats {
        corpus: PathBuf,
        #[command(flatten)]
        opts: CorpusOpts,
        /// Also write the report as jsonl
        #[arg(long)]
        jsonl: Option<PathBuf>,
    },
    /// Outside/inside label pair counts
    Correlate {
        corpus: PathBuf,
        #[command(flatten)]
        opts: CorpusOpts,
        #[arg(long)]
        jsonl: Option<PathBuf>,
    },
    /// Corpus to `id<TAB>sequence` lines
    Linearize {
        corpus: PathBuf,
        #[command(flatten)]
        opts: CorpusOpts,
        /// Output file (standard output when absent)
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// `id<TAB>sequence` lines back to a corpus
    Delinearize {
        sequences: PathBuf,
        #[command(flatten)]
        opts: CorpusOpts,
        /// Output file; its extension picks the format unless --format is given
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate, filter and merge silver data
    Augment {
        /// Run configuration file
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a configuration key, as key=value
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Worker threads
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Filter externally generated sequences against their sources
    Filter {
        /// Golden corpus the sequences were generated from
        #[arg(long)]
        corpus: PathBuf,
        /// `source_id<TAB>sequence` lines
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = cnlaug::cfm::DEFAULT_SILVER_RATE)]
        silver_rate: f64,
        /// labels or exact
        #[arg(long = "match", default_value = "labels")]
        match_mode: String,
        /// builtin, worker or worker:<command>
        #[arg(long, default_value = "builtin")]
        score: String,
        #[arg(long, default_value = cnlaug::cfm::SILVER_PREFIX)]
        silver_prefix: String,
        #[command(flatten)]
        opts: CorpusOpts,
    },
    /// Span-level precision, recall and F1
    Evaluate {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[command(flatten)]
        opts: CorpusOpts,
        #[arg(long)]
        jsonl: Option<PathBuf>,
    },
    /// Write a synthetic nested corpus
    Synth {
        #[arg(long, default_value_t = 200)]
        sentences: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Make every n-th sentence four levels deep (0 for none)
        #[arg(long, default_value_t = 0)]
        deep_every: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Tabulate downstream metrics per silver rate
    Sweep {
        /// Comma-separated silver rates
        #[arg(long, value_delimiter = ',', required = true)]
        rates: Vec<f64>,
        /// Directory holding one metric file per rate
        #[arg(long)]
        metrics_dir: PathBuf,
        /// File name pattern; `{rate}` becomes the rate with two decimals
        #[arg(long, default_value = "rho_{rate}.jsonl")]
        pattern: String,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Stats { corpus, opts, jsonl } => commands::stats(&corpus, &opts, jsonl.as_deref(), false),
        Command::Correlate { corpus, opts, jsonl } => commands::stats(&corpus, &opts, jsonl.as_deref(), true),
        Command::Linearize { corpus, opts, output } => commands::linearize(&corpus, &opts, output.as_deref()),
        Command::Delinearize {
            sequences,
            opts,
            output,
        } => commands::delinearize(&sequences, &opts, output.as_deref()),
        Command::Augment {
            config,
            overrides,
            workers,
        } => commands::augment(config.as_deref(), &overrides, workers),
        Command::Filter {
            corpus,
            generated,
            out_dir,
            silver_rate,
            match_mode,
            score,
            silver_prefix,
            opts,
        } => commands::filter(commands::FilterArgs {
            corpus: &corpus,
            generated: &generated,
            out_dir: &out_dir,
            silver_rate,
            match_mode: &match_mode,
            score: &score,
            silver_prefix: &silver_prefix,
            opts: &opts,
        }),
        Command::Evaluate {
            gold,
            pred,
            opts,
            jsonl,
        } => commands::evaluate(&gold, &pred, &opts, jsonl.as_deref()),
        Command::Synth {
            sentences,
            seed,
            deep_every,
            output,
        } => commands::synth(sentences, seed, deep_every, output.as_deref()),
        Command::Sweep {
            rates,
            metrics_dir,
            pattern,
        } => commands::sweep(&rates, &metrics_dir, &pattern),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}
