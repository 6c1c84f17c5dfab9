//! `deeptox`: featurize, split, train, predict, evaluate, search, compare
//! and interpret multi-task toxicity models.
//!
//! Exit codes: 0 success, 1 usage error (bad flags, missing input files),
//! 2 data error (malformed files, dimension mismatches, training failures).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "deeptox", version, about = "Multi-task neural networks for toxicity prediction")]
struct Cli {
    /// Seed for every random choice (initialization, shuffling, dropout,
    /// sampling). Commands document their default.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; defaults to the number of logical CPUs. Results do
    /// not depend on it.
    #[arg(long, global = true, env = "DEEPTOX_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct FeatureArgs {
    /// Reference pattern file(s) (`pattern_id<TAB>SMILES`), used for
    /// similarity features.
    #[arg(long = "references", value_name = "FILE")]
    references: Vec<PathBuf>,

    /// External descriptor table (`compound_id<TAB>name...`, `NA` for missing).
    #[arg(long, value_name = "FILE")]
    descriptors: Option<PathBuf>,

    /// Feature blocks, joined by `+`: descriptors, similarity, ecfp4.
    #[arg(long, default_value = "ecfp4")]
    families: String,

    /// Minimum number of training compounds an ECFP feature must occur in.
    #[arg(long, default_value_t = 3)]
    sparseness: usize,

    /// standard-deviation, tanh or sqrt.
    #[arg(long, default_value = "tanh")]
    normalization: String,
}

#[derive(Args, Clone)]
struct NetArgs {
    /// Hidden layer widths, comma-separated.
    #[arg(long, default_value = "64", value_delimiter = ',')]
    hidden: Vec<usize>,

    #[arg(long, default_value_t = 0.05)]
    learning_rate: f64,

    #[arg(long, default_value_t = 0.0)]
    l2: f64,

    /// Dropout with keep probabilities 0.8 (inputs) and 0.5 (hidden units).
    #[arg(long)]
    dropout: bool,

    #[arg(long, default_value_t = 32)]
    batch_size: usize,

    #[arg(long, default_value_t = 100)]
    epochs: usize,

    /// Early-stopping patience in epochs; needs validation rows.
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the feature matrix of a compound file (preprocessing fitted on all rows).
    Featurize {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        features: FeatureArgs,
        /// Binary sparse matrix output.
        #[arg(long)]
        output: PathBuf,
        /// Column catalog output (defaults to `<output>.catalog.tsv`).
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Cluster compounds by ECFP4 Tanimoto and deal clusters into folds.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = deeptox::folds::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = deeptox::folds::DEFAULT_FOLDS)]
        folds: usize,
        /// Compounds labeled on fewer tasks only ever train.
        #[arg(long, default_value_t = deeptox::folds::DEFAULT_MIN_TASKS)]
        min_tasks: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train a multi-task network and write a model file (default seed 0).
    Train {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        net: NetArgs,
        /// Fold file; with `--fold`, train on the other folds and validate on this one.
        #[arg(long, requires = "fold")]
        folds: Option<PathBuf>,
        #[arg(long, requires = "folds")]
        fold: Option<usize>,
        #[arg(long)]
        output: PathBuf,
        /// Per-epoch loss and validation AUC.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Write `compound_id<TAB>task<TAB>probability` for every compound and task.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// External descriptors, when the model was trained with them.
        #[arg(long)]
        descriptors: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Per-task AUC of a prediction table against a labeled compound file.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Report output; printed to stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Cross-validated hyperparameter search with per-task selection.
    Search {
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "references", value_name = "FILE")]
        references: Vec<PathBuf>,
        #[arg(long)]
        descriptors: Option<PathBuf>,
        #[arg(long)]
        folds: PathBuf,
        /// Search space file (`key = v1, v2`); overrides `--preset` fields.
        #[arg(long)]
        space: Option<PathBuf>,
        /// Base space: `desk` (hidden 32/64) or `full`.
        #[arg(long, default_value = "desk")]
        preset: String,
        /// Evaluate this many configurations sampled from the grid.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long)]
        patience: Option<usize>,
        /// Long result table.
        #[arg(long)]
        output: PathBuf,
        /// Per-task winners.
        #[arg(long)]
        selection: Option<PathBuf>,
    },
    /// Single-task versus multi-task restarts with a Mann-Whitney test per task
    /// (default seed 0; restart r uses seed + r).
    Compare {
        #[arg(long)]
        train: PathBuf,
        /// Fully or partly labeled evaluation compounds.
        #[arg(long)]
        eval: PathBuf,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        net: NetArgs,
        #[arg(long, default_value_t = deeptox::demo::COMPARISON_RESTARTS)]
        restarts: usize,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Correlate hidden-unit activations with reference pattern presence.
    Interpret {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Patterns to test for.
        #[arg(long = "patterns")]
        patterns: PathBuf,
        #[arg(long)]
        descriptors: Option<PathBuf>,
        /// Hidden layers to analyze (1-based); all when omitted.
        #[arg(long, value_delimiter = ',')]
        layers: Vec<usize>,
        #[arg(long, default_value_t = deeptox::interpret::DEFAULT_PRESENCE_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        output: PathBuf,
        /// Layer trend table over the strongest `--top` pairs of each layer.
        #[arg(long)]
        trend: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Label-count histogram and task correlation matrix.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        histogram: Option<PathBuf>,
        #[arg(long)]
        correlation: Option<PathBuf>,
    },
    /// Convert the public Tox21 CSV layout into the native compound file.
    ImportTox21 {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Merge rows whose largest fragment is the same structure; labels
        /// that disagree within a group become missing.
        #[arg(long = "merge-duplicates")]
        merge: bool,
    },
    /// Write the synthetic demonstration data set (default seed 2014).
    GenerateDemo {
        #[arg(long)]
        output_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(commands::Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
