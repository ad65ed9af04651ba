//! Similarity, one-hot winner selection, layer fitting/encoding and the
//! bottom-up training driver.
//!
//! A layer is `V` independent clusterings. Fitting one clustering means
//! drawing its feature subset and its `k` centers (plain training examples
//! restricted to that subset), optionally followed by the cyclic shift.
//! There is no optimization loop. Encoding maps every example to the index
//! of its most similar center in each clustering.

use std::time::Instant;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::bits::BitMatrix;
use crate::error::{DdrsError, Result};
use crate::model::{
    validate_params, Centers, ClusteringModel, Dataset, DdrsModel, Kernel, LayerModel, LayerParams,
    ModelConfig, SparseCode,
};
use crate::pca::{fit_pca_codes, project_codes};
use crate::sampling::{cyclic_shift, derive_stream, sample_rows, select_features, Purpose};

/// Similarity of one example to each of `k` centers; larger means closer.
pub type Scores = Vec<f64>;

/// Input to a layer: real data for the bottom layer, the previous layer's
/// codes above it.
#[derive(Clone, Copy, Debug)]
pub enum LayerInput<'a> {
    Dense(ArrayView2<'a, f64>),
    Codes(&'a SparseCode),
}

impl LayerInput<'_> {
    pub fn n(&self) -> usize {
        match self {
            LayerInput::Dense(x) => x.nrows(),
            LayerInput::Codes(c) => c.n(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LayerInput::Dense(x) => x.ncols(),
            LayerInput::Codes(c) => c.dense_dim(),
        }
    }
}

/// Bottom-layer similarity: inner product for [`Kernel::Linear`], negated
/// Euclidean distance for [`Kernel::Euclidean`].
pub fn similarity_bottom(
    x_sub: ArrayView1<'_, f64>,
    centers: ArrayView2<'_, f64>,
    kernel: Kernel,
) -> Result<Scores> {
    if x_sub.len() != centers.nrows() {
        return Err(DdrsError::dims(
            "example vs center dimension",
            centers.nrows(),
            x_sub.len(),
        ));
    }
    Ok(centers
        .columns()
        .into_iter()
        .map(|c| match kernel {
            Kernel::Linear => x_sub.dot(&c),
            Kernel::Euclidean => -x_sub
                .iter()
                .zip(c)
                .map(|(x, w)| (x - w) * (x - w))
                .sum::<f64>()
                .sqrt(),
        })
        .collect())
}

/// Upper-layer similarity `W^T x` where `x` is the binary expansion of
/// `code_row` restricted to `feature_indices`. Each score counts the
/// selected coordinates where both the example and the center are 1.
pub fn similarity_upper(
    code_row: &[u32],
    lower_k: usize,
    feature_indices: &[u32],
    centers: &BitMatrix,
) -> Result<Scores> {
    let lower_dim = code_row.len() * lower_k;
    if centers.rows() != feature_indices.len() {
        return Err(DdrsError::dims(
            "center rows vs selected features",
            feature_indices.len(),
            centers.rows(),
        ));
    }
    if let Some(&last) = feature_indices.last() {
        if last as usize >= lower_dim {
            return Err(DdrsError::dims(
                "feature index bound (V * k of lower layer)",
                lower_dim,
                last as usize + 1,
            ));
        }
    }
    let mut scores = vec![0.0; centers.cols()];
    for (b, &w) in code_row.iter().enumerate() {
        if w as usize >= lower_k {
            return Err(DdrsError::dims(
                "winner index bound",
                lower_k,
                w as usize + 1,
            ));
        }
        let pos = (b * lower_k + w as usize) as u32;
        if let Ok(s) = feature_indices.binary_search(&pos) {
            centers.for_each_one(s, |j| scores[j] += 1.0);
        }
    }
    Ok(scores)
}

/// Index of the largest score; ties go to the lowest index.
pub fn one_hot(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(DdrsError::EmptyScores);
    }
    Ok(argmax(scores))
}

#[inline]
fn argmax<T: PartialOrd + Copy>(scores: &[T]) -> usize {
    let mut best = 0;
    for (j, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = j;
        }
    }
    best
}

/// Draws every clustering of one layer. Clustering `v` of layer `layer_index`
/// reads its own three streams, so the result does not depend on threading.
pub fn fit_layer(
    input: LayerInput<'_>,
    params: &LayerParams,
    master_seed: u64,
    layer_index: u32,
) -> Result<LayerModel> {
    let (n, d_in) = (input.n(), input.dim());
    validate_params(params, n, d_in)?;
    let clusterings = (0..params.v_count)
        .into_par_iter()
        .map(|v| {
            let v = v as u64;
            let features = select_features(
                &mut derive_stream(master_seed, layer_index, v, Purpose::Features),
                d_in,
                params.a,
            )?;
            let rows = sample_rows(
                &mut derive_stream(master_seed, layer_index, v, Purpose::Centers),
                n,
                params.k,
            )?;
            let mut centers = match input {
                LayerInput::Dense(x) => dense_centers(x, &features, &rows),
                LayerInput::Codes(codes) => binary_centers(codes, &features, &rows),
            };
            if params.r > 0.0 {
                centers = cyclic_shift(
                    &mut derive_stream(master_seed, layer_index, v, Purpose::Shift),
                    &centers,
                    params.r,
                )?;
            }
            ClusteringModel::new(features, centers)
        })
        .collect::<Result<Vec<_>>>()?;
    LayerModel::new(*params, clusterings, d_in)
}

fn dense_centers(x: ArrayView2<'_, f64>, features: &[u32], rows: &[usize]) -> Centers {
    let mut centers = Array2::zeros((features.len(), rows.len()));
    for (j, &row) in rows.iter().enumerate() {
        let example = x.row(row);
        for (s, &f) in features.iter().enumerate() {
            centers[[s, j]] = example[f as usize];
        }
    }
    Centers::Dense(centers)
}

fn binary_centers(codes: &SparseCode, features: &[u32], rows: &[usize]) -> Centers {
    let mut bits = BitMatrix::zeros(features.len(), rows.len());
    for (j, &row) in rows.iter().enumerate() {
        for pos in codes.active_positions(row) {
            if let Ok(s) = features.binary_search(&(pos as u32)) {
                bits.set(s, j, true);
            }
        }
    }
    Centers::Binary(bits)
}

/// Rows per block in the bottom-layer matrix products.
const ROW_BLOCK: usize = 512;

/// Encodes every example: `indices[i][v]` is the winning center of
/// clustering `v` for example `i`.
///
/// The linear kernel is evaluated as blocked matrix products, so scores may
/// differ from [`similarity_bottom`] in the last bits; winners only differ
/// for near-exact ties.
pub fn encode_layer(layer: &LayerModel, input: LayerInput<'_>) -> Result<SparseCode> {
    if input.dim() != layer.input_dim() {
        return Err(DdrsError::dims(
            "layer input dimension",
            layer.input_dim(),
            input.dim(),
        ));
    }
    let n = input.n();
    let columns: Vec<Vec<u32>> = match input {
        LayerInput::Dense(x) => {
            if !layer.is_bottom() {
                return Err(DdrsError::invalid(
                    "input",
                    "upper layers encode codes, not real-valued data",
                ));
            }
            let kernel = layer.params().kernel;
            layer
                .clusterings()
                .par_iter()
                .map(|c| encode_dense_clustering(c, x, kernel))
                .collect()
        }
        LayerInput::Codes(codes) => {
            if layer.is_bottom() {
                return Err(DdrsError::invalid(
                    "input",
                    "the bottom layer encodes real-valued data, not codes",
                ));
            }
            layer
                .clusterings()
                .par_iter()
                .map(|c| encode_code_clustering(c, codes))
                .collect()
        }
    };
    let v = columns.len();
    let mut indices = vec![0u32; n * v];
    for (b, col) in columns.iter().enumerate() {
        for (i, &w) in col.iter().enumerate() {
            indices[i * v + b] = w;
        }
    }
    SparseCode::new(indices, n, v, layer.params().k)
}

fn encode_dense_clustering(
    c: &ClusteringModel,
    x: ArrayView2<'_, f64>,
    kernel: Kernel,
) -> Vec<u32> {
    let Centers::Dense(w) = c.centers() else {
        unreachable!("bottom layer holds dense centers")
    };
    let features = c.feature_indices();
    let n = x.nrows();
    let mut winners = Vec::with_capacity(n);
    let mut sub = Array2::zeros((ROW_BLOCK.min(n), features.len()));
    for start in (0..n).step_by(ROW_BLOCK) {
        let end = (start + ROW_BLOCK).min(n);
        let rows = end - start;
        for (r, i) in (start..end).enumerate() {
            let example = x.row(i);
            for (s, &f) in features.iter().enumerate() {
                sub[[r, s]] = example[f as usize];
            }
        }
        let block = sub.slice(ndarray::s![..rows, ..]);
        match kernel {
            Kernel::Linear => {
                let scores = block.dot(w);
                for row in scores.rows() {
                    winners.push(argmax(row.as_slice().expect("standard layout")) as u32);
                }
            }
            Kernel::Euclidean => {
                for row in block.rows() {
                    let scores =
                        similarity_bottom(row, w.view(), kernel).expect("dimensions checked");
                    winners.push(argmax(&scores) as u32);
                }
            }
        }
    }
    winners
}

fn encode_code_clustering(c: &ClusteringModel, codes: &SparseCode) -> Vec<u32> {
    let Centers::Binary(bits) = c.centers() else {
        unreachable!("upper layers hold binary centers")
    };
    // Map each position of the lower expansion to its row in the center
    // matrix so scoring an example is V lookups plus the set bits they hit.
    let mut local = vec![u32::MAX; codes.dense_dim()];
    for (s, &f) in c.feature_indices().iter().enumerate() {
        local[f as usize] = s as u32;
    }
    let mut scores = vec![0u32; bits.cols()];
    (0..codes.n())
        .map(|i| {
            scores.iter_mut().for_each(|s| *s = 0);
            for pos in codes.active_positions(i) {
                let s = local[pos];
                if s != u32::MAX {
                    bits.for_each_one(s as usize, |j| scores[j] += 1);
                }
            }
            argmax(&scores) as u32
        })
        .collect()
}

/// Encodes real-valued data through a stack of layers, bottom first.
pub fn encode_through(layers: &[LayerModel], data: ArrayView2<'_, f64>) -> Result<SparseCode> {
    let (first, rest) = layers
        .split_first()
        .ok_or_else(|| DdrsError::invalid("layers", "no layers to encode through"))?;
    let mut codes = encode_layer(first, LayerInput::Dense(data))?;
    for layer in rest {
        codes = encode_layer(layer, LayerInput::Codes(&codes))?;
    }
    Ok(codes)
}

/// Timing and shape of one fitted layer.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct LayerReport {
    pub layer: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub fit_seconds: f64,
    pub encode_seconds: f64,
}

/// Fitted layers together with the training set's top-layer codes.
#[derive(Clone, Debug)]
pub struct LayerStack {
    pub layers: Vec<LayerModel>,
    pub codes: SparseCode,
    pub reports: Vec<LayerReport>,
}

/// Fits the layers bottom-up; each layer is trained on the codes the layer
/// below produced for the training set.
pub fn fit_layers(train: &Dataset, layers: &[LayerParams], master_seed: u64) -> Result<LayerStack> {
    if layers.is_empty() {
        return Err(DdrsError::invalid(
            "layers",
            "at least one layer is required",
        ));
    }
    if layers.len() > u16::MAX as usize {
        return Err(DdrsError::invalid("layers", "too many layers"));
    }
    let mut fitted = Vec::with_capacity(layers.len());
    let mut reports = Vec::with_capacity(layers.len());
    let mut codes: Option<SparseCode> = None;
    for (j, params) in layers.iter().enumerate() {
        let input = match &codes {
            None => LayerInput::Dense(train.features()),
            Some(c) => LayerInput::Codes(c),
        };
        let t0 = Instant::now();
        let layer = fit_layer(input, params, master_seed, j as u32)?;
        let t1 = Instant::now();
        let next = encode_layer(&layer, input)?;
        let t2 = Instant::now();
        reports.push(LayerReport {
            layer: j,
            input_dim: layer.input_dim(),
            output_dim: layer.output_dim(),
            fit_seconds: (t1 - t0).as_secs_f64(),
            encode_seconds: (t2 - t1).as_secs_f64(),
        });
        fitted.push(layer);
        codes = Some(next);
    }
    Ok(LayerStack {
        layers: fitted,
        codes: codes.expect("at least one layer"),
        reports,
    })
}

/// Everything produced while training.
#[derive(Clone, Debug)]
pub struct FitOutput {
    pub model: DdrsModel,
    /// PCA embedding of the training set.
    pub embedding: Array2<f64>,
    pub reports: Vec<LayerReport>,
    pub pca_seconds: f64,
}

pub fn fit_model(train: &Dataset, config: &ModelConfig) -> Result<DdrsModel> {
    fit_model_detailed(train, config).map(|f| f.model)
}

/// Trains all layers, then fits PCA on the dense expansion of the training
/// set's top-layer codes.
pub fn fit_model_detailed(train: &Dataset, config: &ModelConfig) -> Result<FitOutput> {
    config.validate(train.n(), train.d())?;
    let stack = fit_layers(train, &config.layers, config.master_seed)?;
    let t0 = Instant::now();
    let pca = fit_pca_codes(&stack.codes, config.pca_dims)?;
    let embedding = project_codes(&pca, &stack.codes)?;
    let pca_seconds = t0.elapsed().as_secs_f64();
    Ok(FitOutput {
        model: DdrsModel::new(stack.layers, pca, config.master_seed)?,
        embedding,
        reports: stack.reports,
        pca_seconds,
    })
}

/// Encodes `data` through every layer and projects the top codes with the
/// model's PCA.
pub fn transform(model: &DdrsModel, data: &Dataset) -> Result<Array2<f64>> {
    transform_features(model, data.features())
}

pub fn transform_features(model: &DdrsModel, data: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if data.ncols() != model.input_dim() {
        return Err(DdrsError::dims(
            "data dimension vs model input",
            model.input_dim(),
            data.ncols(),
        ));
    }
    let codes = encode_through(model.layers(), data)?;
    project_codes(model.pca(), &codes)
}
