use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "stance", version, about = "Cross-domain stance detection with label mapping")]
pub struct Cli {
    /// Root of the unified corpus (one directory per dataset).
    #[arg(long, global = true, env = "STANCE_DATA_ROOT")]
    pub data_root: Option<PathBuf>,

    /// Dataset registry (JSON array of descriptors). Defaults to
    /// `<data-root>/registry.json` when present, else the built-in list.
    #[arg(long, global = true)]
    pub registry: Option<PathBuf>,

    /// Label group table. Defaults to `<data-root>/label_groups.jsonl` when
    /// present, else the built-in table.
    #[arg(long, global = true)]
    pub groups: Option<PathBuf>,

    /// Drop the repaired rows of the group table.
    #[arg(long, global = true)]
    pub verbatim_groups: bool,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the unified corpus and write its statistics, or write the
    /// synthetic corpus.
    Ingest(IngestArgs),
    /// Train a model on every dataset except the held-out one.
    Train(TrainArgs),
    /// Score predictions, a trained model or a baseline.
    Eval(EvalArgs),
    /// Predict labels of a held-out dataset through label mapping.
    PredictOod(PredictOodArgs),
    /// Dataset-level analyses and plots.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated dataset names (default: every registered dataset found).
    #[arg(long, value_delimiter = ',')]
    pub datasets: Vec<String>,
    /// Write the generated synthetic corpus to `--out` instead.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long, default_value_t = 7)]
    pub synthetic_seed: u64,
    #[arg(long, default_value_t = 120)]
    pub synthetic_train: usize,
    #[arg(long, default_value_t = 40)]
    pub synthetic_eval: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Output directory for the model, history and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON config with training settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set epochs=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub held_out: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub datasets: Vec<String>,
    /// Train on label groups instead of dataset labels (for hard mapping).
    #[arg(long)]
    pub hard: bool,
    #[arg(long, default_value = "run")]
    pub run_id: String,
    /// Skip writing per-epoch checkpoints.
    #[arg(long)]
    pub no_checkpoints: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Majority,
    Random,
    Tfidf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction file (JSON lines with `id` and `label` or `mapped_label`).
    #[arg(long, requires = "gold", conflicts_with_all = ["model", "baseline"])]
    pub predictions: Option<PathBuf>,
    /// Gold examples for `--predictions`, in the unified record format.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Trained model to run over the corpus.
    #[arg(long, conflicts_with = "baseline")]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, value_delimiter = ',')]
    pub datasets: Vec<String>,
    /// Experts averaged at inference: `all` or `own-domain`.
    #[arg(long, default_value = "all")]
    pub selection: String,
    /// Take the majority class from the training split.
    #[arg(long)]
    pub majority_from_train: bool,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = stance_core::trainer::DEFAULT_SEED)]
    pub seed: u64,
    /// Output directory; the table is printed either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictOodArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub held_out: String,
    #[arg(long, default_value = "weak")]
    pub strategy: String,
    /// Label-name vectors, required for weak and soft mapping.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// `static-word` averages word vectors of multi-word names;
    /// `contextual-encoder` looks names up whole.
    #[arg(long, default_value = "static-word")]
    pub embedding_kind: String,
    /// Only let labels of this training dataset be predicted.
    #[arg(long)]
    pub restrict_mask: Option<String>,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(subcommand)]
    pub analysis: Analysis,
}

#[derive(Debug, Subcommand)]
pub enum Analysis {
    /// Correlate dataset features with the per-dataset scores of a report.
    Correlation {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// 2-D projection of pooled encodings of a proportional sample.
    Scatter {
        /// Encode with this model; otherwise with a freshly initialised one.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 25_000)]
        n: usize,
        #[arg(long, default_value_t = stance_core::trainer::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, value_delimiter = ',')]
        datasets: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// 2-D projection of the label-name vectors of every dataset.
    LabelSpace {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value = "static-word")]
        embedding_kind: String,
        #[arg(long)]
        out: PathBuf,
    },
}
