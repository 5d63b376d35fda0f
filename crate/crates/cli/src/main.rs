//! `sentispan` — train, evaluate and run the sentiment/subsentence cascade.
//!
//! Every command exits 0 on success and with a class-specific nonzero code
//! otherwise: 2 usage, 3 I/O, 4 malformed data, 5 bad config, 6 missing or
//! mismatched model artefacts, 7 processing errors, 1 anything else.

mod bundle;
mod commands;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use sentispan_core::corpus::{CorpusError, Sentiment};
use sentispan_core::eval::EvalError;
use sentispan_core::num::NumError;
use sentispan_core::pipeline::PipelineError;
use sentispan_core::tokenizer::TokenizerError;

#[derive(Parser)]
#[command(
    name = "sentispan",
    version,
    about = "Cascaded sentiment classification and subsentence extraction",
    long_about = "Cascaded sentiment classification and subsentence extraction.\n\
                  The train command's --config path can be overridden with the\n\
                  SENTISPAN_CONFIG environment variable."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a CSV, preprocess it and report dataset statistics.
    Ingest {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repair span labels; write the corrected dataset and a report.
    Correct {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// N-gram tables, sentiment distribution and the Jaccard histogram.
    Eda {
        #[arg(long)]
        csv: PathBuf,
        /// Largest gram order to tabulate.
        #[arg(long, default_value_t = 2)]
        ngrams: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one cross-validated experiment from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dataset CSV to train on.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Train on N generated benchmark samples instead of a CSV.
        #[arg(long)]
        synthetic: Option<usize>,
    },
    /// Score the fold models of a training run on a held-out CSV.
    Evaluate {
        #[arg(long)]
        checkpoints: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Fuse checkpoints per an ensemble spec and score the fusion.
    Ensemble {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Run the full cascade on one sentence.
    Predict {
        /// Directory holding classifier/, base/ and coverage/ training runs.
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        text: String,
        /// Bypass the classifier and inject this sentiment downstream.
        #[arg(long, value_parser = parse_sentiment)]
        gold_sentiment: Option<Sentiment>,
        /// Also print the per-token class-activation map.
        #[arg(long)]
        cam: bool,
    },
}

fn parse_sentiment(raw: &str) -> Result<Sentiment, String> {
    Sentiment::parse(raw).ok_or_else(|| format!("unknown sentiment {raw:?}"))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest { csv, out } => commands::ingest(&csv, &out),
        Command::Correct { csv, out, report } => commands::correct(&csv, &out, &report),
        Command::Eda { csv, ngrams, out } => commands::eda(&csv, ngrams, &out),
        Command::Train {
            config,
            out,
            csv,
            synthetic,
        } => {
            let config = std::env::var_os("SENTISPAN_CONFIG")
                .map(PathBuf::from)
                .unwrap_or(config);
            commands::train(&config, &out, csv.as_deref(), synthetic)
        }
        Command::Evaluate { checkpoints, test } => commands::evaluate(&checkpoints, &test),
        Command::Ensemble { spec, test } => commands::ensemble(&spec, &test),
        Command::Predict {
            models,
            text,
            gold_sentiment,
            cam,
        } => commands::predict(&models, &text, gold_sentiment, cam),
    }
}

fn exit_code(err: &anyhow::Error) -> i32 {
    // Hand-written context strings mark missing artefacts regardless of the
    // underlying cause.
    if format!("{err:#}").contains("model missing") {
        return 6;
    }
    for cause in err.chain() {
        if let Some(c) = cause.downcast_ref::<CorpusError>() {
            return match c {
                CorpusError::Io(_) | CorpusError::Csv(_) => 3,
                _ => 4,
            };
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return match e {
                EvalError::BadConfig(_) => 5,
                _ => 7,
            };
        }
        if let Some(n) = cause.downcast_ref::<NumError>() {
            return match n {
                NumError::BadCheckpoint(_) => 6,
                NumError::Io(_) => 3,
                _ => 7,
            };
        }
        if let Some(p) = cause.downcast_ref::<PipelineError>() {
            return match p {
                PipelineError::ModelMissing(_) => 6,
                _ => 7,
            };
        }
        if let Some(t) = cause.downcast_ref::<TokenizerError>() {
            return match t {
                TokenizerError::BadVocabFile(_) => 6,
                TokenizerError::Io(_) => 3,
                _ => 7,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}
