//! Top-m eigenpairs of symmetric positive semi-definite operators.
//!
//! Small operators are materialized and handed to a dense symmetric
//! eigensolver. Large ones (the implicit covariance/Gram operators of sparse
//! codes) go through a restarted block Rayleigh-Ritz iteration that only
//! needs matrix-vector products; residuals are computed explicitly, so the
//! convergence test never relies on Krylov recurrences.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::error::{DdrsError, Result};
use crate::sampling::{derive_stream, Purpose};

/// Symmetric linear operator `y = A x`.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl SymmetricOperator for Array2<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (yi, row) in y.iter_mut().zip(self.rows()) {
            *yi = dot(row.as_slice().expect("standard layout"), x);
        }
    }
}

/// Operators up to this size are solved densely.
pub const DENSE_LIMIT: usize = 512;
/// Convergence threshold on `||A x - theta x||`, relative to `max(1, theta_max)`.
pub const RESIDUAL_TOL: f64 = 1e-10;
const MAX_RESTARTS: usize = 500;

/// Eigenpairs sorted by non-increasing eigenvalue; `vectors[i]` is unit norm.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

pub fn top_eigenpairs(op: &dyn SymmetricOperator, m: usize) -> Result<EigenPairs> {
    let n = op.dim();
    if m < 1 || m > n {
        return Err(DdrsError::invalid(
            "pca_dims",
            format!("m = {m} is outside [1, {n}]"),
        ));
    }
    if n <= DENSE_LIMIT {
        dense_top(&materialize(op), m)
    } else {
        iterative_top(op, m)
    }
}

pub(crate) fn materialize(op: &dyn SymmetricOperator) -> Array2<f64> {
    let n = op.dim();
    let mut out = Array2::zeros((n, n));
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        e[j] = 0.0;
        for i in 0..n {
            out[[i, j]] = col[i];
        }
    }
    symmetrize(out)
}

fn symmetrize(mut a: Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    a
}

/// Full dense decomposition, keeping the `m` largest pairs.
pub fn dense_top(a: &Array2<f64>, m: usize) -> Result<EigenPairs> {
    let (values, vectors) = dense_eig(a.view())?;
    Ok(EigenPairs {
        values: values[..m].to_vec(),
        vectors: vectors.into_iter().take(m).collect(),
    })
}

/// All eigenpairs of a small symmetric matrix, sorted descending (ties by
/// index).
///
/// Rows that are exactly zero (centers that never win give many of them)
/// are eigenvectors for 0 and are split off before the decomposition.
fn dense_eig(a: ArrayView2<'_, f64>) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.nrows();
    let active: Vec<usize> = (0..n)
        .filter(|&i| a.row(i).iter().any(|&x| x != 0.0))
        .collect();
    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n);
    if !active.is_empty() {
        let k = active.len();
        let sub = DMatrix::from_fn(k, k, |i, j| a[[active[i], active[j]]]);
        let (values, vectors) = checked_symmetric_eigen(&sub)?;
        for (j, value) in values.into_iter().enumerate() {
            let mut v = vec![0.0; n];
            for (r, &i) in active.iter().enumerate() {
                v[i] = vectors[(r, j)];
            }
            pairs.push((value, v));
        }
    }
    for i in (0..n).filter(|i| active.binary_search(i).is_err()) {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        pairs.push((0.0, e));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| pairs[y].0.total_cmp(&pairs[x].0).then(x.cmp(&y)));
    let values = order.iter().map(|&i| pairs[i].0).collect();
    let vectors = order
        .iter()
        .map(|&i| std::mem::take(&mut pairs[i].1))
        .collect();
    Ok((values, vectors))
}

/// nalgebra's symmetric QR iteration occasionally breaks down into NaN on
/// matrices with exact zeros. Every result is checked against `A`; on a bad
/// one the solve is repeated on `A + sigma I`, which has the same
/// eigenvectors, and the eigenvalues are recovered as Rayleigh quotients.
fn checked_symmetric_eigen(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let k = a.nrows();
    let norm = a.norm();
    let tol = 1e-9 * norm.max(f64::MIN_POSITIVE);
    for sigma in [0.0, 0.37, 0.011, 1.3] {
        let shifted = a + DMatrix::identity(k, k) * (sigma * norm);
        let eig = SymmetricEigen::new(shifted);
        if !eig.eigenvectors.iter().all(|x| x.is_finite()) {
            continue;
        }
        let av = a * &eig.eigenvectors;
        let values: Vec<f64> = (0..k)
            .map(|j| eig.eigenvectors.column(j).dot(&av.column(j)))
            .collect();
        let ok = (0..k).all(|j| {
            let v = eig.eigenvectors.column(j);
            (v.norm() - 1.0).abs() <= 1e-9 && (av.column(j) - v * values[j]).norm() <= tol
        });
        if ok {
            return Ok((values, eig.eigenvectors));
        }
    }
    Err(DdrsError::NoConvergence(format!(
        "dense symmetric eigensolver failed on a {k} x {k} matrix"
    )))
}

fn iterative_top(op: &dyn SymmetricOperator, m: usize) -> Result<EigenPairs> {
    let n = op.dim();
    let block = (m + 8).min(n);
    let max_basis = (4 * block).max(block + 48).min(n);
    let keep = (2 * block).min(max_basis - 1).max(block.min(max_basis));

    let mut rng = derive_stream(0, 0, 0, Purpose::Eigen);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    let mut pending: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();

    for _ in 0..MAX_RESTARTS {
        // Expand with pending directions until the basis is full.
        while basis.len() < max_basis {
            let Some(mut v) = pending.pop() else { break };
            if !orthonormalize(&mut v, &basis) {
                continue;
            }
            let mut av = vec![0.0; n];
            op.apply(&v, &mut av);
            pending.insert(0, av.clone());
            basis.push(v);
            images.push(av);
        }
        if basis.len() < m {
            // The directions collapsed into a subspace smaller than m; add
            // fresh random ones.
            pending.push((0..n).map(|_| rng.random::<f64>() - 0.5).collect());
            continue;
        }

        let j = basis.len();
        let mut t = Array2::zeros((j, j));
        for a in 0..j {
            for b in a..j {
                let v = dot(&basis[a], &images[b]);
                t[[a, b]] = v;
                t[[b, a]] = v;
            }
        }
        let t = symmetrize(t);
        let (theta, coeffs) = dense_eig(t.view())?;
        let scale = theta[0].abs().max(1.0);

        let ritz: Vec<(Vec<f64>, Vec<f64>)> = (0..keep.min(j))
            .map(|i| (combine(&basis, &coeffs[i]), combine(&images, &coeffs[i])))
            .collect();
        let residuals: Vec<Vec<f64>> = ritz
            .iter()
            .zip(&theta)
            .map(|((x, ax), &th)| ax.iter().zip(x).map(|(a, b)| a - th * b).collect())
            .collect();
        let norms: Vec<f64> = residuals.iter().map(|r| dot(r, r).sqrt()).collect();
        let converged = norms[..m].iter().all(|&r| r <= RESIDUAL_TOL * scale);

        if converged || j == n {
            let mut values = theta[..m].to_vec();
            let mut vectors: Vec<Vec<f64>> = ritz.into_iter().take(m).map(|(x, _)| x).collect();
            // The Ritz vectors are orthonormal up to rounding; tighten it.
            for i in 0..m {
                let (done, rest) = vectors.split_at_mut(i);
                orthonormalize(&mut rest[0], done);
            }
            for v in values.iter_mut() {
                *v = v.max(0.0);
            }
            return Ok(EigenPairs { values, vectors });
        }

        // Thick restart: keep the leading Ritz pairs, continue along the
        // residuals of the unconverged ones.
        let (xs, axs): (Vec<_>, Vec<_>) = ritz.into_iter().unzip();
        basis = xs;
        images = axs;
        pending = residuals
            .into_iter()
            .zip(&norms)
            .take(block)
            .filter(|(_, &r)| r > RESIDUAL_TOL * scale)
            .map(|(r, _)| r)
            .collect();
        pending.reverse();
        if pending.is_empty() {
            pending.push((0..n).map(|_| rng.random::<f64>() - 0.5).collect());
        }
    }
    Err(DdrsError::NoConvergence(format!(
        "eigensolver did not reach residual {RESIDUAL_TOL} after {MAX_RESTARTS} restarts"
    )))
}

fn combine(vectors: &[Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; vectors[0].len()];
    for (v, &c) in vectors.iter().zip(coeffs) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += c * x;
        }
    }
    out
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators in a fixed order keep this vectorizable and
    // deterministic.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Two passes of classical Gram-Schmidt against `basis`, then normalizes.
/// Returns false when `v` is (numerically) inside the span of `basis`.
pub(crate) fn orthonormalize(v: &mut [f64], basis: &[Vec<f64>]) -> bool {
    let original = dot(v, v).sqrt();
    if original == 0.0 || !original.is_finite() {
        return false;
    }
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            for (x, y) in v.iter_mut().zip(q) {
                *x -= c * y;
            }
        }
    }
    let norm = dot(v, v).sqrt();
    if norm <= 1e-10 * original {
        return false;
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    true
}
