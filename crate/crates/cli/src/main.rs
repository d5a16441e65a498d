//! `minerlink` — run the record-linkage pipeline one stage at a time.
//!
//! Stages hand off through files in the output directory:
//!
//! ```text
//! ingest   -> records.jsonl
//! pairs    -> pairs.jsonl
//! label    -> labels.jsonl            (LLM, cached)
//! train    -> model.json, split_{train,val,test}.jsonl
//! predict  -> predictions.jsonl
//! evaluate -> evaluation.json         (prints the F1 row)
//! sweep    -> sweep_<mode>.csv
//! cluster  -> clusters.jsonl, cluster_report.json
//! runtime  -> runtime_measurements.csv, runtime_model.json
//! ```
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data or
//! validation error, 3 LLM transport failure.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod outdir;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::PipelineConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{} not found; run `minerlink {produced_by}` first or pass the path explicitly", path.display())]
    MissingInput { path: PathBuf, produced_by: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] minerlink::Error),
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().to_owned(), source }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Core(e) if e.is_transport() => 3,
            CliError::MissingInput { .. } | CliError::Io { .. } | CliError::Core(_) => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "minerlink", version, about = "LLM-assisted record linkage for mineral-site databases")]
struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for splitting and training; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for all artifacts; overrides the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read every configured CSV into one validated record file.
    Ingest,
    /// Enumerate candidate pairs over all ingested records.
    Pairs {
        /// Drop pairs whose known locations are farther apart than this.
        #[arg(long)]
        max_distance_km: Option<f64>,
    },
    /// Label pairs with the chat-completion endpoint.
    Label {
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Split labeled pairs and train the pair classifier.
    Train {
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Predict match / non-match for pairs.
    Predict(PredictArgs),
    /// Score predictions against ground truth.
    Evaluate {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Retrain on class-controlled subsamples and score each.
    Sweep(SweepArgs),
    /// Merge predicted matches into site clusters.
    Cluster {
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Report clusters larger than this.
        #[arg(long, default_value_t = 50)]
        max_size: usize,
    },
    /// Time a linker over growing record counts and fit the quadratic law.
    Runtime(RuntimeArgs),
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Use the distance + name-cosine rule instead of the trained model.
    #[arg(long)]
    rule: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_parser = parse_mode)]
    mode: minerlink::evaluate::SweepMode,
    /// Comma-separated, strictly increasing grid values.
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<f64>,
    /// Fixed class size for the two fixed-class modes.
    #[arg(long, default_value_t = 0)]
    anchor: usize,
    /// Labeled pool to subsample; defaults to the training split.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long)]
    truth: PathBuf,
}

fn parse_mode(s: &str) -> Result<minerlink::evaluate::SweepMode, String> {
    s.parse().map_err(|e: minerlink::Error| e.to_string())
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum LinkerKind {
    Rule,
    Classifier,
    Llm,
}

#[derive(Args, Debug)]
struct RuntimeArgs {
    /// Record counts to time, comma-separated.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long, value_enum, default_value_t = LinkerKind::Rule)]
    linker: LinkerKind,
    /// Fit existing measurements instead of timing.
    #[arg(long, conflicts_with = "sizes")]
    measurements: Option<PathBuf>,
    /// Also fit a constant overhead term.
    #[arg(long)]
    intercept: bool,
    /// Record count to extrapolate to.
    #[arg(long, default_value_t = 300_000)]
    extrapolate: u64,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.apply_seed(seed);
    }
    if let Some(dir) = cli.output_dir {
        cfg.output_dir = dir;
    }
    cfg.labeler = cfg.labeler.with_env();
    cfg.validate()?;

    let out = outdir::OutputDir::lock(&cfg.output_dir)?;
    match cli.command {
        Command::Ingest => commands::ingest(&cfg, &out),
        Command::Pairs { max_distance_km } => commands::pairs(&out, max_distance_km),
        Command::Label { pairs } => commands::label(&cfg, &out, pairs),
        Command::Train { labels } => commands::train(&cfg, &out, labels),
        Command::Predict(a) => commands::predict(&cfg, &out, a.pairs, a.model, a.rule),
        Command::Evaluate { predictions, truth } => commands::evaluate(&out, predictions, &truth),
        Command::Sweep(a) => commands::sweep(&cfg, &out, a),
        Command::Cluster { predictions, max_size } => commands::cluster(&out, predictions, max_size),
        Command::Runtime(a) => commands::runtime(&cfg, &out, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
