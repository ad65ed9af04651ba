//! Randomized construction steps: stream derivation, feature selection,
//! center sampling and the cyclic-shift reconstruction.
//!
//! Every random draw in the crate comes from a [`RngStream`] keyed by
//! `(master_seed, layer, index, purpose)`, so results do not depend on how
//! work is scheduled across threads.

use ndarray::{Array2, ArrayView2};
use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{DdrsError, Result};
use crate::model::{floor_fraction, Centers};

/// What a stream is used for. The tag is part of the stream key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Features = 1,
    Centers = 2,
    Shift = 3,
    KMeans = 4,
    Subsample = 5,
    Eigen = 6,
}

const INDEX_BITS: u32 = 40;
const MAX_INDEX: u64 = (1 << INDEX_BITS) - 1;

/// Deterministic random stream: ChaCha20 keyed by the master seed, with the
/// 64-bit stream id packing `purpose (8 bits) | layer (16 bits) | index (40 bits)`.
/// Distinct tuples therefore never share a keystream.
#[derive(Clone, Debug)]
pub struct RngStream(ChaCha20Rng);

pub fn derive_stream(master_seed: u64, layer: u32, index: u64, purpose: Purpose) -> RngStream {
    assert!(
        layer <= u16::MAX as u32,
        "layer index {layer} exceeds 16 bits"
    );
    assert!(index <= MAX_INDEX, "stream index {index} exceeds 40 bits");
    let stream_id = ((purpose as u64) << 56) | ((layer as u64) << INDEX_BITS) | index;
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id);
    RngStream(rng)
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    #[inline]
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Picks `floor(a * d_in)` distinct coordinates uniformly, sorted ascending.
pub fn select_features(rng: &mut RngStream, d_in: usize, a: f64) -> Result<Vec<u32>> {
    if d_in > u32::MAX as usize {
        return Err(DdrsError::invalid(
            "d_in",
            "input dimension exceeds u32 range",
        ));
    }
    let count = floor_fraction(a, d_in);
    if count < 1 || count > d_in {
        return Err(DdrsError::invalid(
            "a",
            format!("floor(a * d_in) = floor({a} * {d_in}) = {count} is not in [1, {d_in}]"),
        ));
    }
    let mut picked: Vec<u32> = index::sample(rng, d_in, count)
        .into_iter()
        .map(|i| i as u32)
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Draws `k` distinct example indices out of `n`, in draw order.
pub fn sample_rows(rng: &mut RngStream, n: usize, k: usize) -> Result<Vec<usize>> {
    if k > n {
        return Err(DdrsError::invalid(
            "k",
            format!(
                "k = {k} exceeds example count n = {n}; centers are sampled without replacement"
            ),
        ));
    }
    Ok(index::sample(rng, n, k).into_vec())
}

/// Samples `k` rows of `x_sub` without replacement and returns them as the
/// columns of a `d_sub x k` center matrix.
pub fn sample_centers(
    rng: &mut RngStream,
    x_sub: ArrayView2<'_, f64>,
    k: usize,
) -> Result<Array2<f64>> {
    let rows = sample_rows(rng, x_sub.nrows(), k)?;
    let mut centers = Array2::zeros((x_sub.ncols(), k));
    for (j, &row) in rows.iter().enumerate() {
        centers.column_mut(j).assign(&x_sub.row(row));
    }
    Ok(centers)
}

/// Rows that a cyclic shift with fraction `r` rotates: `floor(r * d_sub)`
/// distinct rows chosen uniformly.
pub fn shift_rows(rng: &mut RngStream, d_sub: usize, r: f64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&r) {
        return Err(DdrsError::invalid(
            "r",
            format!("r = {r} is outside [0, 1]"),
        ));
    }
    let count = floor_fraction(r, d_sub).min(d_sub);
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut rows = index::sample(rng, d_sub, count).into_vec();
    rows.sort_unstable();
    Ok(rows)
}

/// Random reconstruction: rotates `floor(r * d_sub)` randomly chosen rows one
/// step across the centers (center `j` takes center `j - 1`'s value, wrapping).
/// Unselected rows are copied unchanged.
pub fn cyclic_shift(rng: &mut RngStream, centers: &Centers, r: f64) -> Result<Centers> {
    let rows = shift_rows(rng, centers.dim(), r)?;
    if rows.is_empty() || centers.k() == 1 {
        return Ok(centers.clone());
    }
    Ok(centers.rotate_rows(&rows))
}
