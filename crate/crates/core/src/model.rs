//! Domain types and hyperparameter validation. No algorithms live here.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::bits::BitMatrix;
use crate::error::{DdrsError, Result};

/// Current on-disk model format version.
pub const FORMAT_VERSION: u8 = 1;

/// Dense `n x d` training or test corpus with optional integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Option<Vec<u32>>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Option<Vec<u32>>) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 {
            return Err(DdrsError::DegenerateInput("dataset has no examples".into()));
        }
        if d == 0 {
            return Err(DdrsError::DegenerateInput(
                "dataset has zero dimensions".into(),
            ));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(DdrsError::LengthMismatch {
                    what: "labels vs examples",
                    left: labels.len(),
                    right: n,
                });
            }
        }
        if let Some(((row, column), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(DdrsError::NonFinite { row, column });
        }
        Ok(Dataset { features, labels })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn into_parts(self) -> (Array2<f64>, Option<Vec<u32>>) {
        (self.features, self.labels)
    }

    /// Rows `rows` (in that order) as a new dataset.
    pub fn select(&self, rows: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(DdrsError::invalid(
                "rows",
                format!("row index {bad} out of range for {} examples", self.n()),
            ));
        }
        let features = self.features.select(ndarray::Axis(0), rows);
        let labels = self
            .labels
            .as_ref()
            .map(|l| rows.iter().map(|&r| l[r]).collect());
        Dataset::new(features, labels)
    }
}

/// Bottom-layer similarity measure. Upper layers always use the inner
/// product of binary codes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Linear,
    Euclidean,
}

impl Kernel {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Kernel::Linear => 0,
            Kernel::Euclidean => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Kernel> {
        match tag {
            0 => Some(Kernel::Linear),
            1 => Some(Kernel::Euclidean),
            _ => None,
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = DdrsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Kernel::Linear),
            "euclidean" => Ok(Kernel::Euclidean),
            other => Err(DdrsError::invalid(
                "kernel",
                format!("unknown kernel {other:?}, expected linear or euclidean"),
            )),
        }
    }
}

/// Hyperparameters of one layer.
///
/// * `v_count` - number of independent clusterings in the layer
/// * `k` - centers per clustering
/// * `a` - fraction of input dimensions each clustering sees, in (0, 1]
/// * `r` - fraction of a clustering's dimensions that get cyclically
///   shifted across its centers, in [0, 1]; 0 disables the shift
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerParams {
    pub v_count: usize,
    pub k: usize,
    pub a: f64,
    #[serde(default)]
    pub r: f64,
    #[serde(default)]
    pub kernel: Kernel,
}

impl LayerParams {
    pub fn new(v_count: usize, k: usize, a: f64, r: f64, kernel: Kernel) -> Result<Self> {
        let p = LayerParams {
            v_count,
            k,
            a,
            r,
            kernel,
        };
        p.check_fields()?;
        Ok(p)
    }

    /// Checks the bounds that do not depend on the data.
    pub fn check_fields(&self) -> Result<()> {
        if self.v_count < 1 {
            return Err(DdrsError::invalid("v_count", "v_count must be at least 1"));
        }
        if self.k < 1 {
            return Err(DdrsError::invalid("k", "k must be at least 1"));
        }
        if self.k > u32::MAX as usize {
            return Err(DdrsError::invalid(
                "k",
                format!("k = {} exceeds u32 range", self.k),
            ));
        }
        if !(self.a > 0.0 && self.a <= 1.0) {
            return Err(DdrsError::invalid(
                "a",
                format!("a = {} is outside (0, 1]", self.a),
            ));
        }
        if !(0.0..=1.0).contains(&self.r) {
            return Err(DdrsError::invalid(
                "r",
                format!("r = {} is outside [0, 1]", self.r),
            ));
        }
        Ok(())
    }

    /// Number of input dimensions each clustering selects, `floor(a * d_in)`.
    pub fn subset_dim(&self, d_in: usize) -> usize {
        floor_fraction(self.a, d_in)
    }

    pub fn output_dim(&self) -> usize {
        self.v_count * self.k
    }
}

pub(crate) fn floor_fraction(fraction: f64, count: usize) -> usize {
    (fraction * count as f64).floor() as usize
}

/// Validates a layer's hyperparameters against the data it will be fit on.
pub fn validate_params(params: &LayerParams, n: usize, d_in: usize) -> Result<()> {
    params.check_fields()?;
    if params.subset_dim(d_in) < 1 {
        return Err(DdrsError::invalid(
            "a",
            format!(
                "floor(a * d_in) = floor({} * {d_in}) = 0 selects no dimensions",
                params.a
            ),
        ));
    }
    if params.k > n {
        return Err(DdrsError::invalid(
            "k",
            format!(
                "k = {} exceeds example count n = {n}; centers are sampled without replacement",
                params.k
            ),
        ));
    }
    Ok(())
}

/// Full training configuration: one `LayerParams` per layer (bottom first),
/// the PCA output dimension and the master seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub master_seed: u64,
    pub layers: Vec<LayerParams>,
    pub pca_dims: usize,
}

/// Datasets with fewer examples than this get random reconstruction by default.
pub const SMALL_DATASET_THRESHOLD: usize = 200;

impl ModelConfig {
    /// Two layers, V = 100, k = 400 (bottom) and 200 (upper), a = 0.5, linear
    /// kernel. Reconstruction (r = 0.5) is only enabled for datasets with fewer
    /// than 200 examples.
    pub fn default_for(n: usize, pca_dims: usize, master_seed: u64) -> Self {
        let r = if n < SMALL_DATASET_THRESHOLD {
            0.5
        } else {
            0.0
        };
        let layer = |k| LayerParams {
            v_count: 100,
            k,
            a: 0.5,
            r,
            kernel: Kernel::Linear,
        };
        ModelConfig {
            master_seed,
            layers: vec![layer(400), layer(200)],
            pca_dims,
        }
    }

    /// Checks every layer against the example count and the chained input
    /// dimensionality, plus the PCA dimension against the top layer.
    pub fn validate(&self, n: usize, d: usize) -> Result<()> {
        if self.layers.is_empty() {
            return Err(DdrsError::invalid(
                "layers",
                "at least one layer is required",
            ));
        }
        let mut d_in = d;
        for p in &self.layers {
            validate_params(p, n, d_in)?;
            d_in = p.output_dim();
        }
        if self.pca_dims < 1 || self.pca_dims > n.min(d_in) {
            return Err(DdrsError::invalid(
                "pca_dims",
                format!(
                    "pca_dims = {} is outside [1, min(n, D)] = [1, {}]",
                    self.pca_dims,
                    n.min(d_in)
                ),
            ));
        }
        Ok(())
    }
}

/// Centers of one clustering, `d_sub x k` with one column per center.
#[derive(Clone, Debug, PartialEq)]
pub enum Centers {
    /// Real-valued centers of the bottom layer.
    Dense(Array2<f64>),
    /// Binary centers of upper layers; rows are selected coordinates, columns centers.
    Binary(BitMatrix),
}

impl Centers {
    pub fn dim(&self) -> usize {
        match self {
            Centers::Dense(m) => m.nrows(),
            Centers::Binary(b) => b.rows(),
        }
    }

    pub fn k(&self) -> usize {
        match self {
            Centers::Dense(m) => m.ncols(),
            Centers::Binary(b) => b.cols(),
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, Centers::Binary(_))
    }

    /// Center entry as a real, whichever representation backs it.
    pub fn value(&self, row: usize, center: usize) -> f64 {
        match self {
            Centers::Dense(m) => m[[row, center]],
            Centers::Binary(b) => b.get(row, center) as u8 as f64,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            Centers::Dense(m) => m.clone(),
            Centers::Binary(b) => {
                Array2::from_shape_fn((b.rows(), b.cols()), |(s, j)| b.get(s, j) as u8 as f64)
            }
        }
    }

    /// Rotates every listed row one step: center `j` takes the value center
    /// `(j - 1) mod k` had.
    pub fn rotate_rows(&self, rows: &[usize]) -> Centers {
        match self {
            Centers::Dense(m) => {
                let k = m.ncols();
                let mut out = m.clone();
                for &s in rows {
                    for j in 0..k {
                        out[[s, j]] = m[[s, (j + k - 1) % k]];
                    }
                }
                Centers::Dense(out)
            }
            Centers::Binary(b) => {
                let mut out = b.clone();
                for &s in rows {
                    out.rotate_row(s);
                }
                Centers::Binary(out)
            }
        }
    }
}

/// One k-centers clustering: the input coordinates it reads and its centers.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusteringModel {
    feature_indices: Vec<u32>,
    centers: Centers,
}

impl ClusteringModel {
    pub fn new(feature_indices: Vec<u32>, centers: Centers) -> Result<Self> {
        if feature_indices.is_empty() {
            return Err(DdrsError::invalid(
                "feature_indices",
                "no features selected",
            ));
        }
        if feature_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DdrsError::invalid(
                "feature_indices",
                "indices must be strictly increasing",
            ));
        }
        if centers.dim() != feature_indices.len() {
            return Err(DdrsError::dims(
                "center rows vs selected features",
                feature_indices.len(),
                centers.dim(),
            ));
        }
        if centers.k() < 1 {
            return Err(DdrsError::invalid(
                "centers",
                "a clustering needs at least one center",
            ));
        }
        if let Centers::Dense(m) = &centers {
            if let Some(((row, column), _)) = m.indexed_iter().find(|(_, v)| !v.is_finite()) {
                return Err(DdrsError::NonFinite { row, column });
            }
        }
        Ok(ClusteringModel {
            feature_indices,
            centers,
        })
    }

    pub fn feature_indices(&self) -> &[u32] {
        &self.feature_indices
    }

    pub fn centers(&self) -> &Centers {
        &self.centers
    }

    pub fn k(&self) -> usize {
        self.centers.k()
    }
}

/// One layer: `V` independent clusterings sharing hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerModel {
    params: LayerParams,
    clusterings: Vec<ClusteringModel>,
    input_dim: usize,
}

impl LayerModel {
    pub fn new(
        params: LayerParams,
        clusterings: Vec<ClusteringModel>,
        input_dim: usize,
    ) -> Result<Self> {
        params.check_fields()?;
        if clusterings.len() != params.v_count {
            return Err(DdrsError::dims(
                "clusterings vs v_count",
                params.v_count,
                clusterings.len(),
            ));
        }
        let binary = clusterings[0].centers.is_binary();
        for c in &clusterings {
            if c.k() != params.k {
                return Err(DdrsError::dims("centers per clustering", params.k, c.k()));
            }
            if c.centers.is_binary() != binary {
                return Err(DdrsError::invalid(
                    "centers",
                    "a layer mixes binary and real centers",
                ));
            }
            if let Some(&last) = c.feature_indices.last() {
                if last as usize >= input_dim {
                    return Err(DdrsError::invalid(
                        "feature_indices",
                        format!("feature index {last} is outside input dimension {input_dim}"),
                    ));
                }
            }
        }
        Ok(LayerModel {
            params,
            clusterings,
            input_dim,
        })
    }

    pub fn params(&self) -> &LayerParams {
        &self.params
    }

    pub fn clusterings(&self) -> &[ClusteringModel] {
        &self.clusterings
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.params.output_dim()
    }

    /// Bottom layers read real-valued data and hold real centers.
    pub fn is_bottom(&self) -> bool {
        !self.clusterings[0].centers.is_binary()
    }
}

/// Compact layer output: one winning-center index per (example, clustering).
///
/// Row `i` stands for the binary vector of length `v * k` that has a single
/// one in each of its `v` consecutive blocks of width `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseCode {
    indices: Vec<u32>,
    n: usize,
    v: usize,
    k: usize,
}

impl SparseCode {
    /// `indices` is row-major `n x v`.
    pub fn new(indices: Vec<u32>, n: usize, v: usize, k: usize) -> Result<Self> {
        if v == 0 || k == 0 {
            return Err(DdrsError::invalid("layer_dims", "V and k must be positive"));
        }
        if indices.len() != n * v {
            return Err(DdrsError::dims("code entries", n * v, indices.len()));
        }
        if let Some(&bad) = indices.iter().find(|&&w| w as usize >= k) {
            return Err(DdrsError::invalid(
                "indices",
                format!("winner index {bad} is outside [0, {k})"),
            ));
        }
        Ok(SparseCode { indices, n, v, k })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `(V, k)` of the layer that produced the code.
    pub fn layer_dims(&self) -> (usize, usize) {
        (self.v, self.k)
    }

    /// Length of the dense expansion, `V * k`.
    pub fn dense_dim(&self) -> usize {
        self.v * self.k
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u32] {
        &self.indices[i * self.v..(i + 1) * self.v]
    }

    /// Positions of the ones in the dense expansion of row `i`.
    pub fn active_positions(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let k = self.k;
        self.row(i)
            .iter()
            .enumerate()
            .map(move |(b, &w)| b * k + w as usize)
    }

    pub fn dense_row(&self, i: usize) -> Array1<f64> {
        let mut out = Array1::zeros(self.dense_dim());
        for p in self.active_positions(i) {
            out[p] = 1.0;
        }
        out
    }

    /// Materializes the full `n x (V * k)` binary matrix. Only sensible for
    /// small codes.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.dense_dim()));
        for i in 0..self.n {
            for p in self.active_positions(i) {
                out[[i, p]] = 1.0;
            }
        }
        out
    }

    pub fn select(&self, rows: &[usize]) -> SparseCode {
        let mut indices = Vec::with_capacity(rows.len() * self.v);
        for &r in rows {
            indices.extend_from_slice(self.row(r));
        }
        SparseCode {
            indices,
            n: rows.len(),
            v: self.v,
            k: self.k,
        }
    }
}

/// Fitted PCA readout: `(x - mean) * projection`.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    mean: Array1<f64>,
    projection: Array2<f64>,
    eigenvalues: Vec<f64>,
}

/// Element-wise tolerance on `P^T P = I`.
pub const ORTHONORMALITY_TOL: f64 = 1e-8;
/// Eigenvalues above this negative floor are clamped to zero; below it they are rejected.
pub const NEGATIVE_EIGENVALUE_FLOOR: f64 = -1e-10;

impl PcaModel {
    pub fn new(mean: Array1<f64>, projection: Array2<f64>, eigenvalues: Vec<f64>) -> Result<Self> {
        let (d, m) = projection.dim();
        if mean.len() != d {
            return Err(DdrsError::dims(
                "PCA mean vs projection rows",
                d,
                mean.len(),
            ));
        }
        if eigenvalues.len() != m {
            return Err(DdrsError::dims(
                "PCA eigenvalues vs projection columns",
                m,
                eigenvalues.len(),
            ));
        }
        if m == 0 {
            return Err(DdrsError::invalid(
                "pca_dims",
                "PCA needs at least one component",
            ));
        }
        if mean.iter().chain(projection.iter()).any(|v| !v.is_finite()) {
            return Err(DdrsError::invalid(
                "projection",
                "PCA parameters must be finite",
            ));
        }
        let mut eigenvalues = eigenvalues;
        for ev in eigenvalues.iter_mut() {
            if !ev.is_finite() || *ev < NEGATIVE_EIGENVALUE_FLOOR {
                return Err(DdrsError::invalid(
                    "eigenvalues",
                    format!("eigenvalue {ev} is negative"),
                ));
            }
            *ev = ev.max(0.0);
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(DdrsError::invalid(
                "eigenvalues",
                "eigenvalues must be non-increasing",
            ));
        }
        let gram = projection.t().dot(&projection);
        for ((i, j), &g) in gram.indexed_iter() {
            let target = if i == j { 1.0 } else { 0.0 };
            if (g - target).abs() > ORTHONORMALITY_TOL {
                return Err(DdrsError::invalid(
                    "projection",
                    format!("projection columns are not orthonormal: (P^T P)[{i},{j}] = {g}"),
                ));
            }
        }
        Ok(PcaModel {
            mean,
            projection,
            eigenvalues,
        })
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn projection(&self) -> &Array2<f64> {
        &self.projection
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn input_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.projection.ncols()
    }
}

/// The trained artifact: layers bottom-first plus the PCA readout.
#[derive(Clone, Debug, PartialEq)]
pub struct DdrsModel {
    layers: Vec<LayerModel>,
    pca: PcaModel,
    master_seed: u64,
    format_version: u8,
}

impl DdrsModel {
    pub fn new(layers: Vec<LayerModel>, pca: PcaModel, master_seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(DdrsError::invalid(
                "layers",
                "a model needs at least one layer",
            ));
        }
        if !layers[0].is_bottom() {
            return Err(DdrsError::invalid(
                "layers",
                "the first layer must hold real-valued centers",
            ));
        }
        for (j, pair) in layers.windows(2).enumerate() {
            if pair[1].is_bottom() {
                return Err(DdrsError::invalid(
                    "layers",
                    format!("layer {} above the bottom holds real-valued centers", j + 1),
                ));
            }
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(DdrsError::dims(
                    "layer input vs previous output",
                    pair[0].output_dim(),
                    pair[1].input_dim(),
                ));
            }
        }
        let top = layers.last().map(LayerModel::output_dim).unwrap_or(0);
        if pca.input_dim() != top {
            return Err(DdrsError::dims(
                "PCA input vs top layer output",
                top,
                pca.input_dim(),
            ));
        }
        Ok(DdrsModel {
            layers,
            pca,
            master_seed,
            format_version: FORMAT_VERSION,
        })
    }

    pub fn layers(&self) -> &[LayerModel] {
        &self.layers
    }

    pub fn pca(&self) -> &PcaModel {
        &self.pca
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn format_version(&self) -> u8 {
        self.format_version
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.pca.output_dim()
    }

    /// Reassembles the configuration the model was trained with.
    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            master_seed: self.master_seed,
            layers: self.layers.iter().map(|l| *l.params()).collect(),
            pca_dims: self.pca.output_dim(),
        }
    }
}
