//! Evaluation protocol: Lloyd's k-means in the embedded space, scored with
//! normalized mutual information against ground-truth labels.

use ndarray::{Array2, ArrayView2};
use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{DdrsError, Result};
use crate::sampling::{derive_stream, Purpose, RngStream};

/// Hard assignment of `n` items to cluster ids in `[0, c)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    assignments: Vec<usize>,
    c: usize,
}

impl Partition {
    pub fn new(assignments: Vec<usize>, c: usize) -> Result<Self> {
        if assignments.is_empty() {
            return Err(DdrsError::DegenerateInput(
                "a partition needs at least one item".into(),
            ));
        }
        if let Some(&bad) = assignments.iter().find(|&&a| a >= c) {
            return Err(DdrsError::invalid(
                "assignments",
                format!("cluster id {bad} is not below c = {c}"),
            ));
        }
        Ok(Partition { assignments, c })
    }

    /// Partition over `0..=max(label)`.
    pub fn from_labels(labels: &[u32]) -> Result<Self> {
        let c = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
        Partition::new(labels.iter().map(|&l| l as usize).collect(), c)
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn n(&self) -> usize {
        self.assignments.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansOptions {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this (absolute distance).
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub partition: Partition,
    pub inertia: f64,
    pub centroids: Array2<f64>,
    pub iterations: usize,
    /// Inertia after each assignment step, ending with the final one.
    pub inertia_history: Vec<f64>,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn assign(
    points: &[Vec<f64>],
    centroids: &[Vec<f64>],
    labels: &mut [usize],
    dists: &mut [f64],
) -> f64 {
    let mut inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut best = 0;
        let mut best_d = sq_dist(p, &centroids[0]);
        for (j, c) in centroids.iter().enumerate().skip(1) {
            let d = sq_dist(p, c);
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        labels[i] = best;
        dists[i] = best_d;
        inertia += best_d;
    }
    inertia
}

/// Lloyd's algorithm from a Forgy start (`c` distinct random points).
///
/// Assignment ties go to the lowest centroid index. A cluster that loses
/// all its points is reseeded with the point farthest from its current
/// centroid.
pub fn kmeans(
    points: ArrayView2<'_, f64>,
    c: usize,
    rng: &mut RngStream,
    opts: KMeansOptions,
) -> Result<KMeansResult> {
    let n = points.nrows();
    if c < 1 || c > n {
        return Err(DdrsError::invalid(
            "c",
            format!("c = {c} is outside [1, n = {n}]"),
        ));
    }
    if opts.max_iter < 1 {
        return Err(DdrsError::invalid(
            "max_iter",
            "max_iter must be at least 1",
        ));
    }
    if !(opts.tol >= 0.0) {
        return Err(DdrsError::invalid(
            "tol",
            format!("tol = {} must be non-negative", opts.tol),
        ));
    }
    let pts: Vec<Vec<f64>> = points.rows().into_iter().map(|r| r.to_vec()).collect();
    let m = points.ncols();
    let mut centroids: Vec<Vec<f64>> = index::sample(rng, n, c)
        .into_iter()
        .map(|i| pts[i].clone())
        .collect();
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0; n];
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..opts.max_iter {
        iterations += 1;
        history.push(assign(&pts, &centroids, &mut labels, &mut dists));

        let mut sums = vec![vec![0.0; m]; c];
        let mut counts = vec![0usize; c];
        for (p, &l) in pts.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &cnt), old)| {
                if cnt == 0 {
                    old.clone()
                } else {
                    s.into_iter().map(|v| v / cnt as f64).collect()
                }
            })
            .collect();
        // Reseed empty clusters with the worst-fit points.
        for j in 0..c {
            if counts[j] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            if let Some(i) = far {
                counts[labels[i]] -= 1;
                labels[i] = j;
                counts[j] = 1;
                dists[i] = 0.0;
                next[j] = pts[i].clone();
            }
        }
        let shift = next
            .iter()
            .zip(&centroids)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift <= opts.tol {
            break;
        }
    }
    let inertia = assign(&pts, &centroids, &mut labels, &mut dists);
    history.push(inertia);
    let centroids = Array2::from_shape_fn((c, m), |(j, d)| centroids[j][d]);
    Ok(KMeansResult {
        partition: Partition::new(labels, c)?,
        inertia,
        centroids,
        iterations,
        inertia_history: history,
    })
}

/// Normalized mutual information `I(p; q) / sqrt(H(p) H(q))` with natural
/// logarithms.
///
/// When either entropy is zero the result is 1 if the two partitions are
/// identical up to relabeling and 0 otherwise.
pub fn nmi(p: &Partition, q: &Partition) -> Result<f64> {
    if p.n() != q.n() {
        return Err(DdrsError::LengthMismatch {
            what: "partition sizes",
            left: p.n(),
            right: q.n(),
        });
    }
    let n = p.n() as f64;
    let mut table = vec![0usize; p.c() * q.c()];
    let mut rows = vec![0usize; p.c()];
    let mut cols = vec![0usize; q.c()];
    for (&a, &b) in p.assignments().iter().zip(q.assignments()) {
        table[a * q.c() + b] += 1;
        rows[a] += 1;
        cols[b] += 1;
    }
    let entropy = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let f = c as f64 / n;
                -f * f.ln()
            })
            .sum()
    };
    let hp = entropy(&rows);
    let hq = entropy(&cols);
    // One nonzero cell per occupied row and per occupied column means the
    // partitions agree up to relabeling; answer exactly rather than rounding.
    let rows_ok = (0..p.c()).all(|a| (0..q.c()).filter(|&b| table[a * q.c() + b] > 0).count() <= 1);
    let cols_ok = (0..q.c()).all(|b| (0..p.c()).filter(|&a| table[a * q.c() + b] > 0).count() <= 1);
    if rows_ok && cols_ok {
        return Ok(1.0);
    }
    if hp == 0.0 || hq == 0.0 {
        return Ok(0.0);
    }
    let mut terms = Vec::new();
    for a in 0..p.c() {
        for b in 0..q.c() {
            let nab = table[a * q.c() + b];
            if nab == 0 {
                continue;
            }
            let nab = nab as f64;
            terms.push((nab / n) * (n * nab / (rows[a] as f64 * cols[b] as f64)).ln());
        }
    }
    // Summing in sorted order makes nmi(p, q) and nmi(q, p) bit-identical.
    terms.sort_by(f64::total_cmp);
    let mi: f64 = terms.iter().sum();
    Ok((mi / (hp * hq).sqrt()).clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NmiSummary {
    pub nmi_mean: f64,
    pub nmi_std: f64,
    pub runs: usize,
    pub c: usize,
    #[serde(skip)]
    pub per_run: Vec<f64>,
}

/// Runs k-means `runs` times (run `r` seeded from stream `(master_seed, r)`)
/// and reports the mean and sample standard deviation of NMI against `labels`.
pub fn evaluate_embedding(
    embed: ArrayView2<'_, f64>,
    labels: &Partition,
    c: usize,
    runs: usize,
    master_seed: u64,
) -> Result<NmiSummary> {
    if runs < 1 {
        return Err(DdrsError::invalid("runs", "runs must be at least 1"));
    }
    if embed.nrows() != labels.n() {
        return Err(DdrsError::LengthMismatch {
            what: "embedding rows vs labels",
            left: embed.nrows(),
            right: labels.n(),
        });
    }
    let per_run = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = derive_stream(master_seed, 0, r as u64, Purpose::KMeans);
            let km = kmeans(embed, c, &mut rng, KMeansOptions::default())?;
            nmi(&km.partition, labels)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = per_run.iter().sum::<f64>() / runs as f64;
    let std = if runs >= 2 {
        (per_run.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(NmiSummary {
        nmi_mean: mean,
        nmi_std: std,
        runs,
        c,
        per_run,
    })
}
