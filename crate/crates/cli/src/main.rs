//! `zrtopic`: topic identification for untranscribed speech, from acoustic
//! features to cross-validated classification results.

mod config;
mod io;
mod manifest;
mod stages;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::config::load_config;
use crate::stages::EvaluateInputs;

#[derive(Debug, Parser)]
#[command(name = "zrtopic", version, about = "Zero-resource spoken-document topic identification pipeline")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for this stage.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for parallel sections; 1 forces fully sequential runs.
    /// Results are identical for any worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Override the config's root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CorpusArg {
    /// Corpus manifest (corpus.json).
    #[arg(long)]
    corpus: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with ground truth.
    Synth,
    /// Discover and cluster repeated terms across a corpus.
    Utd {
        #[command(flatten)]
        corpus: CorpusArg,
        /// Trained rescoring model (JSON); required when the config enables
        /// rescoring.
        #[arg(long)]
        rescorer: Option<PathBuf>,
    },
    /// Train the acoustic unit discovery model.
    AudTrain(CorpusArg),
    /// Tokenize a corpus with a trained unit model.
    AudDecode {
        #[command(flatten)]
        corpus: CorpusArg,
        /// Trained model file (model.aud).
        #[arg(long)]
        model: PathBuf,
    },
    /// Turn unit tokenizations into per-document n-gram counts.
    Featurize {
        #[command(flatten)]
        corpus: CorpusArg,
        /// Unit sequences (units.jsonl).
        #[arg(long)]
        units: PathBuf,
    },
    /// Pre-train skip-gram unit embeddings.
    Embed {
        /// Unit sequences (units.jsonl).
        #[arg(long)]
        units: PathBuf,
    },
    /// One cross-validation run of the SVM classifier.
    TrainSvm {
        #[command(flatten)]
        corpus: CorpusArg,
        /// Per-document n-gram counts (counts.jsonl / term_counts.jsonl).
        #[arg(long)]
        counts: Option<PathBuf>,
        /// Unit sequences to featurize on the fly.
        #[arg(long)]
        units: Option<PathBuf>,
        /// Decode the corpus with this model first.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// One cross-validation run of the CNN classifier.
    TrainCnn {
        #[command(flatten)]
        corpus: CorpusArg,
        /// Unit sequences (units.jsonl).
        #[arg(long)]
        units: Option<PathBuf>,
        /// Decode the corpus with this model first.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Pre-trained embedding table (embeddings.txt).
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Repeated cross-validation with mean and standard deviation.
    Evaluate {
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long)]
        counts: Option<PathBuf>,
        #[arg(long)]
        units: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Learning curve over the number of training folds.
    Curve {
        #[command(flatten)]
        corpus: CorpusArg,
        #[arg(long)]
        counts: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter("ZRTOPIC_LOG")).init();
    let cli = Cli::parse();

    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| anyhow::anyhow!("cannot configure {workers} workers: {e}"))?;
    }
    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| anyhow::anyhow!("--config is required"))?;
    let out = cli
        .out
        .as_deref()
        .ok_or_else(|| anyhow::anyhow!("--out is required"))?;
    let loaded = load_config(config_path, cli.seed)?;

    match &cli.command {
        Command::Synth => stages::run_synth(&loaded, out),
        Command::Utd { corpus, rescorer } => {
            stages::run_utd(&loaded, &corpus.corpus, rescorer.as_deref(), out)
        }
        Command::AudTrain(c) => stages::run_aud_train(&loaded, &c.corpus, out),
        Command::AudDecode { corpus, model } => {
            stages::run_aud_decode(&loaded, &corpus.corpus, model, out)
        }
        Command::Featurize { corpus, units } => {
            stages::run_featurize(&loaded, &corpus.corpus, units, out)
        }
        Command::Embed { units } => stages::run_embed(&loaded, units, out),
        Command::TrainSvm {
            corpus,
            counts,
            units,
            model,
        } => stages::run_single_cv(
            &loaded,
            &EvaluateInputs {
                corpus: &corpus.corpus,
                counts: counts.as_deref(),
                units: units.as_deref(),
                embeddings: None,
                model: model.as_deref(),
            },
            out,
        ),
        Command::TrainCnn {
            corpus,
            units,
            model,
            embeddings,
        } => stages::run_single_cv(
            &loaded,
            &EvaluateInputs {
                corpus: &corpus.corpus,
                counts: None,
                units: units.as_deref(),
                embeddings: embeddings.as_deref(),
                model: model.as_deref(),
            },
            out,
        ),
        Command::Evaluate {
            corpus,
            counts,
            units,
            model,
            embeddings,
        } => stages::run_evaluate(
            &loaded,
            &EvaluateInputs {
                corpus: &corpus.corpus,
                counts: counts.as_deref(),
                units: units.as_deref(),
                embeddings: embeddings.as_deref(),
                model: model.as_deref(),
            },
            out,
            None,
        ),
        Command::Curve { corpus, counts } => {
            stages::run_curve(&loaded, &corpus.corpus, counts, out)
        }
    }
}
