//! PCA readout: mean plus the top-m principal directions, fit either on a
//! dense matrix or directly on one-hot codes without expanding them.
//!
//! The eigenproblem is posed on whichever of the `D x D` covariance or the
//! `n x n` Gram matrix is smaller; Gram eigenvectors are mapped back through
//! the centered data and renormalized. Covariance uses the `n - 1` divisor.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::eigen::{dot, orthonormalize, top_eigenpairs, EigenPairs, SymmetricOperator};
use crate::error::{DdrsError, Result};
use crate::model::{PcaModel, SparseCode};

fn check_sizes(n: usize, d: usize, m: usize) -> Result<()> {
    if n < 2 {
        return Err(DdrsError::DegenerateInput(format!(
            "PCA needs at least 2 examples, got {n}"
        )));
    }
    if m < 1 || m > n.min(d) {
        return Err(DdrsError::invalid(
            "pca_dims",
            format!("m = {m} is outside [1, min(n, D)] = [1, {}]", n.min(d)),
        ));
    }
    Ok(())
}

/// Fits PCA on a dense `n x D` matrix.
pub fn fit_pca(data: ArrayView2<'_, f64>, m: usize) -> Result<PcaModel> {
    let (n, d) = data.dim();
    check_sizes(n, d, m)?;
    let mean = data.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &data - &mean;
    let scale = 1.0 / (n as f64 - 1.0);

    let directions = if d <= n {
        let cov = centered.t().dot(&centered) * scale;
        top_eigenpairs(&cov, m)?.vectors
    } else {
        let gram = centered.dot(&centered.t()) * scale;
        let pairs = top_eigenpairs(&gram, m)?;
        gram_to_directions(&pairs, d, |u| {
            centered.t().dot(&Array1::from(u.to_vec())).to_vec()
        })
    };
    finish(mean, directions, |p| {
        // Rayleigh quotient on the covariance: ||X~ p||^2 / (n - 1).
        let xp = centered.dot(&Array1::from(p.to_vec()));
        xp.dot(&xp) * scale
    })
}

/// Fits PCA on the dense expansion of `codes` without materializing it.
pub fn fit_pca_codes(codes: &SparseCode, m: usize) -> Result<PcaModel> {
    let n = codes.n();
    let d = codes.dense_dim();
    check_sizes(n, d, m)?;
    let stats = CodeStats::new(codes);

    let directions = if d <= n {
        let op = CodeCovariance(&stats);
        top_eigenpairs(&op, m)?.vectors
    } else {
        let op = CodeGram(&stats);
        let pairs = top_eigenpairs(&op, m)?;
        gram_to_directions(&pairs, d, |u| stats.centered_transpose_times(u))
    };
    let mean = Array1::from(stats.mean.clone());
    finish(mean, directions, |p| {
        let xp = stats.centered_times(p);
        dot(&xp, &xp) * stats.scale
    })
}

/// Maps Gram eigenvectors `u` to unit covariance eigenvectors `X~^T u`.
/// Directions with (numerically) zero eigenvalue are left empty for `finish`
/// to complete.
fn gram_to_directions(
    pairs: &EigenPairs,
    d: usize,
    back: impl Fn(&[f64]) -> Vec<f64>,
) -> Vec<Vec<f64>> {
    let top = pairs.values[0].max(0.0);
    pairs
        .vectors
        .iter()
        .zip(&pairs.values)
        .map(|(u, &lambda)| {
            if lambda <= 1e-12 * top.max(1e-300) {
                return Vec::new();
            }
            let mut p = back(u);
            let norm = dot(&p, &p).sqrt();
            if norm == 0.0 {
                return Vec::new();
            }
            p.iter_mut().for_each(|x| *x /= norm);
            debug_assert_eq!(p.len(), d);
            p
        })
        .collect()
}

/// Orthonormalizes, completes missing directions, applies the sign
/// convention and computes eigenvalues as Rayleigh quotients.
fn finish(
    mean: Array1<f64>,
    mut directions: Vec<Vec<f64>>,
    rayleigh: impl Fn(&[f64]) -> f64,
) -> Result<PcaModel> {
    let d = mean.len();
    let m = directions.len();
    let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut next_basis = 0usize;
    for dir in directions.iter_mut() {
        let mut v = std::mem::take(dir);
        if v.is_empty() || !orthonormalize(&mut v, &accepted) {
            // Rank-deficient tail: any orthonormal completion will do.
            loop {
                assert!(next_basis < d, "cannot complete more than D directions");
                let mut e = vec![0.0; d];
                e[next_basis] = 1.0;
                next_basis += 1;
                if orthonormalize(&mut e, &accepted) {
                    v = e;
                    break;
                }
            }
        }
        accepted.push(v);
    }

    let mut eigenvalues = Vec::with_capacity(m);
    let mut projection = Array2::zeros((d, m));
    for (j, mut v) in accepted.into_iter().enumerate() {
        let (arg, _) = v
            .iter()
            .enumerate()
            .fold((0, -1.0f64), |(bi, bv), (i, &x)| {
                if x.abs() > bv {
                    (i, x.abs())
                } else {
                    (bi, bv)
                }
            });
        if v[arg] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        eigenvalues.push(rayleigh(&v).max(0.0));
        projection.column_mut(j).assign(&Array1::from(v));
    }
    // Rayleigh quotients of converged pairs are ordered; smooth out rounding
    // so the stored sequence is exactly non-increasing.
    for j in 1..eigenvalues.len() {
        if eigenvalues[j] > eigenvalues[j - 1] {
            eigenvalues[j] = eigenvalues[j - 1];
        }
    }
    PcaModel::new(mean, projection, eigenvalues)
}

/// `(data - mean) * projection`.
pub fn project(model: &PcaModel, data: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if data.ncols() != model.input_dim() {
        return Err(DdrsError::dims(
            "data columns vs PCA input",
            model.input_dim(),
            data.ncols(),
        ));
    }
    let centered = &data - model.mean();
    Ok(centered.dot(model.projection()))
}

/// Projects the dense expansion of `codes`: each row is a sum of `V`
/// projection rows minus the projected mean.
pub fn project_codes(model: &PcaModel, codes: &SparseCode) -> Result<Array2<f64>> {
    if codes.dense_dim() != model.input_dim() {
        return Err(DdrsError::dims(
            "code width vs PCA input",
            model.input_dim(),
            codes.dense_dim(),
        ));
    }
    let p = model.projection();
    let offset = model.mean().dot(p);
    let m = model.output_dim();
    let mut out = Array2::zeros((codes.n(), m));
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        for pos in codes.active_positions(i) {
            row += &p.row(pos);
        }
        row -= &offset;
    }
    Ok(out)
}

/// Column counts and helpers for the centered one-hot matrix `X~ = X - 1 mu^T`.
struct CodeStats<'a> {
    codes: &'a SparseCode,
    mean: Vec<f64>,
    scale: f64,
}

impl<'a> CodeStats<'a> {
    fn new(codes: &'a SparseCode) -> Self {
        let n = codes.n();
        let mut mean = vec![0.0; codes.dense_dim()];
        for i in 0..n {
            for p in codes.active_positions(i) {
                mean[p] += 1.0;
            }
        }
        mean.iter_mut().for_each(|c| *c /= n as f64);
        CodeStats {
            codes,
            mean,
            scale: 1.0 / (n as f64 - 1.0),
        }
    }

    /// `X~ v`, length n.
    fn centered_times(&self, v: &[f64]) -> Vec<f64> {
        let shift = dot(&self.mean, v);
        (0..self.codes.n())
            .map(|i| self.codes.active_positions(i).map(|p| v[p]).sum::<f64>() - shift)
            .collect()
    }

    /// `X~^T u`, length D.
    fn centered_transpose_times(&self, u: &[f64]) -> Vec<f64> {
        let total: f64 = u.iter().sum();
        let mut out: Vec<f64> = self.mean.iter().map(|mu| -mu * total).collect();
        for (i, &ui) in u.iter().enumerate() {
            for p in self.codes.active_positions(i) {
                out[p] += ui;
            }
        }
        out
    }
}

struct CodeCovariance<'a, 'b>(&'b CodeStats<'a>);

impl SymmetricOperator for CodeCovariance<'_, '_> {
    fn dim(&self) -> usize {
        self.0.mean.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let t = self.0.centered_times(x);
        let z = self.0.centered_transpose_times(&t);
        for (yi, zi) in y.iter_mut().zip(z) {
            *yi = zi * self.0.scale;
        }
    }
}

struct CodeGram<'a, 'b>(&'b CodeStats<'a>);

impl SymmetricOperator for CodeGram<'_, '_> {
    fn dim(&self) -> usize {
        self.0.codes.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let s = self.0.centered_transpose_times(x);
        let z = self.0.centered_times(&s);
        for (yi, zi) in y.iter_mut().zip(z) {
            *yi = zi * self.0.scale;
        }
    }
}
