//! Synthetic inputs shared by the benchmarks.

use ddrs_core::{Dataset, SparseCode};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n x d` data drawn from `clusters` Gaussian-free "blobs": each example is
/// a random prototype plus uniform noise, scaled into [0, 1].
pub fn blobs(n: usize, d: usize, clusters: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut labels = Vec::with_capacity(n);
    let features = Array2::from_shape_fn((n, d), |(i, j)| {
        let c = i % clusters;
        if j == 0 {
            labels.push(c as u32);
        }
        (0.7 * prototypes[c][j] + 0.3 * rng.random::<f64>()).clamp(0.0, 1.0)
    });
    Dataset::new(features, Some(labels)).expect("finite synthetic data")
}

pub fn random_code(n: usize, v: usize, k: usize, seed: u64) -> SparseCode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = (0..n * v).map(|_| rng.random_range(0..k as u32)).collect();
    SparseCode::new(indices, n, v, k).expect("indices below k")
}
