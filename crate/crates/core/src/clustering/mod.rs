//! K-means on the common subspace and the evaluation metrics.

mod metrics;

pub use metrics::{accuracy, nmi, purity, Contingency, MetricReport, NMI_NORMALIZATION};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numeric::{seeded_rng, squared_distance, Matrix};

#[derive(Debug, thiserror::Error)]
pub enum ClusterError {
    #[error("cannot form {clusters} clusters from {samples} samples")]
    TooFewSamples { clusters: usize, samples: usize },
    #[error("cluster count must be at least 1")]
    ZeroClusters,
    #[error("non-finite value in the clustering input")]
    NonFinite,
    #[error("label vectors are empty")]
    EmptyLabels,
    #[error("predicted labels have length {pred}, ground truth has {truth}")]
    LabelLength { pred: usize, truth: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iter: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    /// `c × p`, one center per row.
    pub centers: Matrix,
    pub assignments: Vec<usize>,
    /// `Σ ‖z − u_{s(z)}‖²` at the returned assignment.
    pub objective: f64,
    /// Objective after every assignment step of the winning restart.
    pub trace: Vec<f64>,
    pub restart: usize,
}

impl ClusterModel {
    pub fn n_clusters(&self) -> usize {
        self.centers.rows()
    }
}

/// Sum of squared distances of every row to its assigned center.
pub fn objective(z: &Matrix, centers: &Matrix, assignments: &[usize]) -> f64 {
    z.iter_rows()
        .zip(assignments)
        .map(|(row, &k)| squared_distance(row, centers.row(k)))
        .sum()
}

fn nearest(row: &[f64], centers: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.iter_rows().enumerate() {
        let d = squared_distance(row, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn plus_plus_seeds<R: Rng + ?Sized>(z: &Matrix, c: usize, rng: &mut R) -> Matrix {
    let n = z.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = z
        .iter_rows()
        .map(|r| squared_distance(r, z.row(chosen[0])))
        .collect();
    while chosen.len() < c {
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            // Every remaining point coincides with a center.
            Err(_) => rng.random_range(0..n),
        };
        chosen.push(next);
        for (d, r) in d2.iter_mut().zip(z.iter_rows()) {
            *d = d.min(squared_distance(r, z.row(next)));
        }
    }
    z.select_rows(&chosen)
}

fn lloyd(z: &Matrix, mut centers: Matrix, max_iter: usize) -> (Matrix, Vec<usize>, Vec<f64>) {
    let n = z.rows();
    let c = centers.rows();
    let p = z.cols();
    let mut assignments = vec![usize::MAX; n];
    let mut trace = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for (i, row) in z.iter_rows().enumerate() {
            let (k, d) = nearest(row, &centers);
            dists[i] = d;
            if assignments[i] != k {
                assignments[i] = k;
                changed = true;
            }
        }
        trace.push(dists.iter().sum());
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(c, p);
        let mut counts = vec![0usize; c];
        for (row, &k) in z.iter_rows().zip(&assignments) {
            counts[k] += 1;
            for (s, v) in sums.row_mut(k).iter_mut().zip(row) {
                *s += v;
            }
        }
        for k in 0..c {
            if counts[k] > 0 {
                let inv = 1.0 / counts[k] as f64;
                for (dst, s) in centers.row_mut(k).iter_mut().zip(sums.row(k)) {
                    *dst = s * inv;
                }
            }
        }
        // Empty clusters take the point farthest from its own center.
        for k in 0..c {
            if counts[k] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("n >= 1");
                centers.row_mut(k).copy_from_slice(z.row(far));
                dists[far] = 0.0;
            }
        }
    }
    (centers, assignments, trace)
}

/// K-means with k-means++ seeding; keeps the restart with the lowest
/// objective (earliest restart on ties).
pub fn kmeans(
    z: &Matrix,
    c: usize,
    config: &KMeansConfig,
    seed: u64,
) -> Result<ClusterModel, ClusterError> {
    if c == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if c > z.rows() {
        return Err(ClusterError::TooFewSamples {
            clusters: c,
            samples: z.rows(),
        });
    }
    if !z.is_finite() {
        return Err(ClusterError::NonFinite);
    }
    let mut rng = seeded_rng(seed, crate::streams::KMEANS);
    let mut best: Option<ClusterModel> = None;
    for restart in 0..config.restarts.max(1) {
        let seeds = plus_plus_seeds(z, c, &mut rng);
        let (centers, assignments, trace) = lloyd(z, seeds, config.max_iter);
        let obj = objective(z, &centers, &assignments);
        if best.as_ref().is_none_or(|b| obj < b.objective) {
            best = Some(ClusterModel {
                centers,
                assignments,
                objective: obj,
                trace,
                restart,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}
