//! The dimension sweep: layers are trained once, the top-layer codes of the
//! training and test sets are cached, and only PCA is refit per dimension.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use ddrs_core::sampling::sample_rows;
use ddrs_core::{
    derive_stream, encode_through, evaluate_embedding, fit_layers, fit_pca, fit_pca_codes, project,
    project_codes, Dataset, DdrsError, LayerParams, Partition, Purpose, Result,
};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ddrs,
    Pca,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ddrs => "ddrs",
            Method::Pca => "pca",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineRow {
    pub method: Method,
    pub dim: usize,
    pub nmi_mean: f64,
    pub nmi_std: f64,
    /// Training time behind this row: all layers plus this dimension's PCA
    /// for DDRS, the PCA fit alone for the baseline.
    pub fit_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct PipelineOptions {
    pub layers: Vec<LayerParams>,
    pub master_seed: u64,
    pub dims: Vec<usize>,
    pub clusters: usize,
    pub runs: usize,
    pub baseline_only: bool,
}

/// Runs DDRS (unless `baseline_only`) and the PCA baseline at every
/// dimension. k-means for both methods uses `master_seed`, so the two see
/// identical evaluation randomness.
pub fn run_pipeline(
    train: &Dataset,
    test: &Dataset,
    test_labels: &Partition,
    opts: &PipelineOptions,
) -> Result<Vec<PipelineRow>> {
    if opts.dims.is_empty() {
        return Err(DdrsError::invalid(
            "dims",
            "at least one target dimension is required",
        ));
    }
    if test.d() != train.d() {
        return Err(DdrsError::dims(
            "test dimension vs train dimension",
            train.d(),
            test.d(),
        ));
    }
    if test_labels.n() != test.n() {
        return Err(DdrsError::LengthMismatch {
            what: "test labels vs test examples",
            left: test_labels.n(),
            right: test.n(),
        });
    }
    let mut rows = Vec::new();
    if !opts.baseline_only {
        let stack = fit_layers(train, &opts.layers, opts.master_seed)?;
        let layer_seconds: f64 = stack
            .reports
            .iter()
            .map(|r| r.fit_seconds + r.encode_seconds)
            .sum();
        let test_codes = encode_through(&stack.layers, test.features())?;
        for &dim in &opts.dims {
            let t0 = Instant::now();
            let pca = fit_pca_codes(&stack.codes, dim)?;
            let pca_seconds = t0.elapsed().as_secs_f64();
            let embedding = project_codes(&pca, &test_codes)?;
            let s = evaluate_embedding(
                embedding.view(),
                test_labels,
                opts.clusters,
                opts.runs,
                opts.master_seed,
            )?;
            rows.push(PipelineRow {
                method: Method::Ddrs,
                dim,
                nmi_mean: s.nmi_mean,
                nmi_std: s.nmi_std,
                fit_seconds: layer_seconds + pca_seconds,
            });
        }
    }
    for &dim in &opts.dims {
        let t0 = Instant::now();
        let pca = fit_pca(train.features(), dim)?;
        let fit_seconds = t0.elapsed().as_secs_f64();
        let embedding = project(&pca, test.features())?;
        let s = evaluate_embedding(
            embedding.view(),
            test_labels,
            opts.clusters,
            opts.runs,
            opts.master_seed,
        )?;
        rows.push(PipelineRow {
            method: Method::Pca,
            dim,
            nmi_mean: s.nmi_mean,
            nmi_std: s.nmi_std,
            fit_seconds,
        });
    }
    Ok(rows)
}

/// Writes the result table with header `method,dim,nmi_mean,nmi_std,fit_seconds`.
pub fn write_table(mut w: impl Write, rows: &[PipelineRow]) -> std::io::Result<()> {
    writeln!(w, "method,dim,nmi_mean,nmi_std,fit_seconds")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{:.3}",
            r.method, r.dim, r.nmi_mean, r.nmi_std, r.fit_seconds
        )?;
    }
    Ok(())
}

/// Keeps a seeded random subset of `limit` examples in their original order.
/// `index` separates the streams used for different datasets.
pub fn subsample(data: &Dataset, limit: usize, master_seed: u64, index: u64) -> Result<Dataset> {
    if limit >= data.n() {
        return Ok(data.clone());
    }
    if limit == 0 {
        return Err(DdrsError::invalid(
            "limit",
            "a subset needs at least one example",
        ));
    }
    let mut rng = derive_stream(master_seed, 0, index, Purpose::Subsample);
    let mut rows = sample_rows(&mut rng, data.n(), limit)?;
    rows.sort_unstable();
    data.select(&rows)
}
