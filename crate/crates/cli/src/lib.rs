//! Command implementations behind the `ddrs` binary.

pub mod args;
pub mod pipeline;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use ddrs_core::dataio::{load_idx_labels, load_label_lines};
use ddrs_core::{
    evaluate_embedding, fit_model_detailed, load_csv, load_idx_dataset, load_model,
    read_embedding_csv, save_model, transform, write_embedding_csv, Dataset, DdrsError,
    ModelConfig, Partition,
};
use serde::Serialize;

use crate::args::{
    Cli, Command, CsvArgs, DataArgs, EvalArgs, ModelArgs, PipelineArgs, TrainArgs, TransformArgs,
};
use crate::pipeline::{run_pipeline, subsample, write_table, PipelineOptions};

/// PCA output dimension when neither the config nor `--dims` gives one.
pub const DEFAULT_PCA_DIMS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] DdrsError),
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("writing {target}: {source}")]
    Output { target: String, source: io::Error },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl CliError {
    /// 2 for problems with the caller's input, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_user_error() => 2,
            CliError::Config { .. } | CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::ThreadPool(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Transform(a) => cmd_transform(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Pipeline(a) => cmd_pipeline(&a),
    })
}

fn load_data(data: &DataArgs) -> CliResult<Dataset> {
    match (&data.data_idx_images, &data.data_csv) {
        (Some(images), None) => Ok(load_idx_dataset(images, data.data_idx_labels.as_deref())?),
        (None, Some(csv)) => load_csv_args(csv, &data.csv),
        _ => Err(CliError::Usage(
            "give exactly one of --data-idx-images and --data-csv".into(),
        )),
    }
}

fn load_csv_args(path: &Path, csv: &CsvArgs) -> CliResult<Dataset> {
    if !csv.delimiter.is_ascii() {
        return Err(CliError::Usage(format!(
            "delimiter {:?} is not an ASCII character",
            csv.delimiter
        )));
    }
    Ok(load_csv(path, csv.csv_labels, csv.delimiter as u8)?)
}

/// Reads labels from an IDX label file (recognized by its magic number) or
/// from a text file with one integer per line.
pub fn load_labels(path: &Path) -> CliResult<Vec<u32>> {
    let head = fs::read(path).map_err(DdrsError::from)?;
    if head.len() >= 4 && head[..4] == [0, 0, 8, 1] {
        Ok(load_idx_labels(path)?)
    } else {
        Ok(load_label_lines(path)?)
    }
}

fn read_config(path: &Path) -> CliResult<ModelConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

/// Resolves the training config. Precedence: `--seed` over the config's
/// seed, `dims` over the config's `pca_dims`, and `--kernel-override` over
/// every layer's kernel. Without a config file the two-layer defaults for
/// `n` examples are used.
pub fn resolve_config(args: &ModelArgs, n: usize, dims: Option<usize>) -> CliResult<ModelConfig> {
    let mut config = match &args.config {
        Some(path) => read_config(path)?,
        None => ModelConfig::default_for(n, DEFAULT_PCA_DIMS, 0),
    };
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(m) = dims {
        config.pca_dims = m;
    }
    if let Some(kernel) = args.kernel_override {
        for layer in &mut config.layers {
            layer.kernel = kernel;
        }
    }
    Ok(config)
}

/// Opens `--out` or stdout.
fn output(path: Option<&Path>) -> CliResult<(Box<dyn Write>, String)> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| CliError::Output {
                target: p.display().to_string(),
                source: e,
            })?;
            Ok((Box::new(BufWriter::new(f)), p.display().to_string()))
        }
        None => Ok((Box::new(io::stdout().lock()), "stdout".into())),
    }
}

fn finish(mut w: Box<dyn Write>, target: String) -> CliResult<()> {
    w.flush()
        .map_err(|source| CliError::Output { target, source })
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    n: usize,
    d: usize,
    master_seed: u64,
    pca_dims: usize,
    layers: &'a [ddrs_core::LayerReport],
    pca_seconds: f64,
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let data = load_data(&args.data)?;
    let config = resolve_config(&args.model_args, data.n(), args.dims)?;
    let fitted = fit_model_detailed(&data, &config)?;
    save_model(&fitted.model, &args.model)?;
    let summary = TrainSummary {
        n: data.n(),
        d: data.d(),
        master_seed: config.master_seed,
        pca_dims: config.pca_dims,
        layers: &fitted.reports,
        pca_seconds: fitted.pca_seconds,
    };
    println!(
        "{}",
        serde_json::to_string(&summary).expect("summary serializes")
    );
    eprintln!("model written to {}", args.model.display());
    Ok(())
}

pub fn cmd_transform(args: &TransformArgs) -> CliResult<()> {
    let model = load_model(&args.model)?;
    let data = load_data(&args.data)?;
    let embedding = transform(&model, &data)?;
    let (mut w, target) = output(args.out.as_deref())?;
    write_embedding_csv(&mut w, embedding.view())?;
    finish(w, target)?;
    eprintln!(
        "embedded {} examples into {} dimensions",
        embedding.nrows(),
        embedding.ncols()
    );
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let embedding = read_embedding_csv(&args.embedding)?;
    let labels = Partition::from_labels(&load_labels(&args.labels)?)?;
    let summary = evaluate_embedding(
        embedding.view(),
        &labels,
        args.clusters,
        args.runs,
        args.seed,
    )?;
    let (mut w, target) = output(args.out.as_deref())?;
    writeln!(
        w,
        "{}",
        serde_json::to_string(&summary).expect("summary serializes")
    )
    .map_err(|source| CliError::Output {
        target: target.clone(),
        source,
    })?;
    finish(w, target)
}

fn load_split(
    idx_images: &Option<PathBuf>,
    idx_labels: Option<&Path>,
    csv: &Option<PathBuf>,
    csv_args: &CsvArgs,
) -> CliResult<Dataset> {
    match (idx_images, csv) {
        (Some(images), None) => Ok(load_idx_dataset(images, idx_labels)?),
        (None, Some(path)) => load_csv_args(path, csv_args),
        _ => Err(CliError::Usage(
            "each split needs exactly one of an IDX image file and a CSV file".into(),
        )),
    }
}

pub fn cmd_pipeline(args: &PipelineArgs) -> CliResult<()> {
    let train = load_split(&args.train_idx_images, None, &args.train_csv, &args.csv)?;
    let mut test = load_split(
        &args.test_idx_images,
        args.test_idx_labels.as_deref(),
        &args.test_csv,
        &args.csv,
    )?;
    if let Some(path) = &args.labels {
        let (features, _) = test.into_parts();
        test = Dataset::new(features, Some(load_labels(path)?))?;
    }
    let config = resolve_config(&args.model_args, train.n(), None)?;
    let seed = config.master_seed;
    let train = match args.limit_train {
        Some(l) => subsample(&train, l, seed, 0)?,
        None => train,
    };
    let test = match args.limit_test {
        Some(l) => subsample(&test, l, seed, 1)?,
        None => test,
    };
    let labels = test.labels().ok_or_else(|| {
        CliError::Usage(
            "the test set has no labels; pass --test-idx-labels, --csv-labels or --labels".into(),
        )
    })?;
    let labels = Partition::from_labels(labels)?;
    // Without a config file the defaults depend on the (possibly reduced) training size.
    let layers = match &args.model_args.config {
        Some(_) => config.layers,
        None => resolve_config(&args.model_args, train.n(), None)?.layers,
    };
    eprintln!(
        "pipeline: {} training and {} test examples, d = {}",
        train.n(),
        test.n(),
        train.d()
    );
    let opts = PipelineOptions {
        layers,
        master_seed: seed,
        dims: args.dims.clone(),
        clusters: args.clusters,
        runs: args.runs,
        baseline_only: args.baseline_only,
    };
    let rows = run_pipeline(&train, &test, &labels, &opts)?;
    let (mut w, target) = output(args.out.as_deref())?;
    write_table(&mut w, &rows).map_err(|source| CliError::Output {
        target: target.clone(),
        source,
    })?;
    finish(w, target)
}
