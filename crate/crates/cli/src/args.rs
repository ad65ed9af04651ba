use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ddrs_core::Kernel;

/// Train, apply and evaluate deep distributed random samplings models.
///
/// Machine-readable results (JSON lines, CSV tables) go to stdout or the
/// `--out` file; diagnostics go to stderr. Exit status is 0 on success,
/// 2 for bad input or parameters and 1 for internal failures.
#[derive(Debug, Parser)]
#[command(name = "ddrs", version)]
pub struct Cli {
    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write it to --model.
    Train(TrainArgs),
    /// Embed a dataset with a saved model and write the CSV to --out.
    Transform(TransformArgs),
    /// Cluster an embedding with k-means and score it against labels.
    Eval(EvalArgs),
    /// Train once, then evaluate the embedding at several dimensions next to
    /// a PCA baseline on the raw features.
    Pipeline(PipelineArgs),
}

/// One input dataset, given either as IDX files or as a CSV table.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// IDX image file (pixel bytes are scaled into [0, 1]).
    #[arg(
        long,
        value_name = "PATH",
        conflicts_with = "data_csv",
        required_unless_present = "data_csv"
    )]
    pub data_idx_images: Option<PathBuf>,
    /// IDX label file matching --data-idx-images.
    #[arg(long, value_name = "PATH", requires = "data_idx_images")]
    pub data_idx_labels: Option<PathBuf>,
    /// Numeric CSV without header, one example per row.
    #[arg(long, value_name = "PATH")]
    pub data_csv: Option<PathBuf>,
    #[command(flatten)]
    pub csv: CsvArgs,
}

#[derive(Debug, Args)]
pub struct CsvArgs {
    /// The last CSV column holds integer labels.
    #[arg(long)]
    pub csv_labels: bool,
    #[arg(long, default_value_t = ',', value_name = "CHAR")]
    pub delimiter: char,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// JSON config: {"master_seed", "layers": [{"v_count","k","a","r","kernel"}], "pca_dims"}.
    /// Without it the two-layer defaults are used.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; takes precedence over the config's master_seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace the bottom-layer kernel of every configured layer.
    #[arg(long, value_name = "KERNEL")]
    pub kernel_override: Option<Kernel>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model_args: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Output model file.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// PCA output dimension; overrides the config's pca_dims (default 10).
    #[arg(long)]
    pub dims: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Output embedding CSV; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Embedding CSV with header e0,...,e{m-1}.
    #[arg(long, value_name = "PATH")]
    pub embedding: PathBuf,
    /// Labels as an IDX label file or as one integer per line.
    #[arg(long, value_name = "PATH")]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub clusters: usize,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output JSON file; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub model_args: ModelArgs,
    #[arg(
        long,
        value_name = "PATH",
        conflicts_with = "train_csv",
        required_unless_present = "train_csv"
    )]
    pub train_idx_images: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub train_csv: Option<PathBuf>,
    #[arg(
        long,
        value_name = "PATH",
        conflicts_with = "test_csv",
        required_unless_present = "test_csv"
    )]
    pub test_idx_images: Option<PathBuf>,
    #[arg(long, value_name = "PATH", requires = "test_idx_images")]
    pub test_idx_labels: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub test_csv: Option<PathBuf>,
    /// Test labels as an IDX label file or one integer per line, when they
    /// are not part of the test data itself.
    #[arg(long, value_name = "PATH")]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub csv: CsvArgs,
    /// Use a seeded random subset of this many training examples.
    #[arg(long, value_name = "N")]
    pub limit_train: Option<usize>,
    /// Use a seeded random subset of this many test examples.
    #[arg(long, value_name = "N")]
    pub limit_test: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "2,3,5,10,20,30")]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub clusters: usize,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    /// Only run the PCA baseline.
    #[arg(long)]
    pub baseline_only: bool,
    /// Output CSV table; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}
