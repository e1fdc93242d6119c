//! Per-view difficulty labels and their adversarial reconciliation.
//!
//! Each view labels every sample easy or difficult from its distance to the
//! anchor. Views disagree; the disagreeing `(sample, view pair)` triples are
//! resolved by a minimax game between a shared embedder and a binary
//! difficulty classifier (see [`AisModel`]).

mod model;

#[doc(hidden)]
pub use model::probe;
pub use model::{AisConfig, AisModel, EpochStats};

use serde::{Deserialize, Serialize};

use crate::data::{NeighborPartition, Region};
use crate::numeric::{clamped_ln, Matrix, NumericError};

#[derive(Debug, thiserror::Error)]
pub enum AisError {
    #[error("boundary factor mu must lie in (0, 1), got {0}")]
    BadMu(f64),
    #[error("view {view}: {set} set is empty, difficulty boundary undefined")]
    EmptyRegion { view: usize, set: &'static str },
    #[error("need at least 2 labelled views, got {0}")]
    TooFewViews(usize),
    #[error("non-finite loss in batch {batch}")]
    NonFiniteLoss { batch: usize },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Difficulty {
    Easy = 0,
    Difficult = 1,
}

impl Difficulty {
    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

/// Difficulty labels of one view. The anchor has no region and is labelled easy.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewLabels {
    pub view_index: usize,
    pub labels: Vec<Difficulty>,
    pub regions: Vec<Option<Region>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyAssignment {
    pub mu: f64,
    pub views: Vec<ViewLabels>,
}

impl DifficultyAssignment {
    pub fn n_samples(&self) -> usize {
        self.views.first().map_or(0, |v| v.labels.len())
    }

    pub fn label(&self, view: usize, sample: usize) -> Difficulty {
        self.views[view].labels[sample]
    }
}

/// Labels a view: a negative sample farther than `mu · d_max(N)`, or a
/// positive sample nearer than `mu · d_max(P)`, is easy; everything else is
/// difficult. Both inequalities are strict.
pub fn assign_difficulty(partition: &NeighborPartition, mu: f64) -> Result<ViewLabels, AisError> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(AisError::BadMu(mu));
    }
    let view = partition.view_index;
    let max_p = partition
        .max_distance(Region::Positive)
        .ok_or(AisError::EmptyRegion {
            view,
            set: "positive",
        })?;
    let max_n = partition
        .max_distance(Region::Negative)
        .ok_or(AisError::EmptyRegion {
            view,
            set: "negative",
        })?;
    let regions = partition.regions();
    let labels = regions
        .iter()
        .zip(&partition.distances)
        .map(|(region, &d)| match region {
            Some(Region::Negative) if d > mu * max_n => Difficulty::Easy,
            Some(Region::Positive) if d < mu * max_p => Difficulty::Easy,
            Some(_) => Difficulty::Difficult,
            None => Difficulty::Easy,
        })
        .collect();
    Ok(ViewLabels {
        view_index: view,
        labels,
        regions,
    })
}

pub fn assign_all(
    partitions: &[NeighborPartition],
    mu: f64,
) -> Result<DifficultyAssignment, AisError> {
    let views = partitions
        .iter()
        .map(|p| assign_difficulty(p, mu))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DifficultyAssignment { mu, views })
}

/// One sample whose labels differ between `view_a < view_b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InconsistentPair {
    pub sample: usize,
    pub view_a: usize,
    pub view_b: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InconsistentPairSet {
    pub pairs: Vec<InconsistentPair>,
}

impl InconsistentPairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Distinct samples involved in at least one pair, ascending.
    pub fn samples(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.pairs.iter().map(|p| p.sample).collect();
        s.dedup();
        s
    }
}

/// Every disagreeing `(sample, view_a, view_b)` over all unordered view
/// pairs, ordered by sample then view pair.
pub fn collect_inconsistent(views: &[ViewLabels]) -> InconsistentPairSet {
    let n = views.first().map_or(0, |v| v.labels.len());
    let mut pairs = Vec::new();
    for sample in 0..n {
        for a in 0..views.len() {
            for b in (a + 1)..views.len() {
                if views[a].labels[sample] != views[b].labels[sample] {
                    pairs.push(InconsistentPair {
                        sample,
                        view_a: a,
                        view_b: b,
                    });
                }
            }
        }
    }
    InconsistentPairSet { pairs }
}

/// Fused sample for a view pair: the two raw vectors concatenated.
pub fn fuse_pair(x_i: &[f64], x_j: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x_i.len() + x_j.len());
    out.extend_from_slice(x_i);
    out.extend_from_slice(x_j);
    out
}

/// Classifier cross-entropy over `K` pairs:
/// `-(1/K) Σ ell · (ln f(e_i) + ln(1 - f(e_j)))`, probabilities clamped.
/// Returns 0 for `K = 0`.
pub fn adv_loss(f_i: &[f64], f_j: &[f64], ell: f64) -> f64 {
    adv_loss_with_grad(f_i, f_j, ell).0
}

/// [`adv_loss`] with its derivatives in each `f_i` and `f_j`.
pub fn adv_loss_with_grad(f_i: &[f64], f_j: &[f64], ell: f64) -> (f64, Vec<f64>, Vec<f64>) {
    assert_eq!(f_i.len(), f_j.len(), "adv_loss needs paired outputs");
    let k = f_i.len();
    if k == 0 {
        return (0.0, Vec::new(), Vec::new());
    }
    let scale = ell / k as f64;
    let mut total = 0.0;
    let mut grad_i = Vec::with_capacity(k);
    let mut grad_j = Vec::with_capacity(k);
    for (&pi, &pj) in f_i.iter().zip(f_j) {
        let (ln_i, d_i) = clamped_ln(pi);
        let (ln_j, d_j) = clamped_ln(1.0 - pj);
        total += ln_i + ln_j;
        grad_i.push(-scale * d_i);
        grad_j.push(scale * d_j);
    }
    (-scale * total, grad_i, grad_j)
}

/// Hinge similarity loss over `K` triplets of embeddings (rows):
/// `(1/K) Σ max(0, m + ‖F(x^{ij}) − F(x^i)‖² − ‖F(x^{ij}) − F(x^j)‖²)`.
pub fn sim_loss(e_i: &Matrix, e_fused: &Matrix, e_j: &Matrix, margin: f64) -> f64 {
    sim_loss_with_grad(e_i, e_fused, e_j, margin).0
}

pub struct SimGrad {
    pub e_i: Matrix,
    pub e_fused: Matrix,
    pub e_j: Matrix,
}

pub fn sim_loss_with_grad(
    e_i: &Matrix,
    e_fused: &Matrix,
    e_j: &Matrix,
    margin: f64,
) -> (f64, SimGrad) {
    assert_eq!(e_i.shape(), e_fused.shape(), "sim_loss shape");
    assert_eq!(e_j.shape(), e_fused.shape(), "sim_loss shape");
    let (k, w) = e_fused.shape();
    let mut grad = SimGrad {
        e_i: Matrix::zeros(k, w),
        e_fused: Matrix::zeros(k, w),
        e_j: Matrix::zeros(k, w),
    };
    if k == 0 {
        return (0.0, grad);
    }
    let inv_k = 1.0 / k as f64;
    let mut total = 0.0;
    for r in 0..k {
        let (a, f, b) = (e_i.row(r), e_fused.row(r), e_j.row(r));
        let near: f64 = f.iter().zip(a).map(|(x, y)| (x - y) * (x - y)).sum();
        let far: f64 = f.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let hinge = margin + near - far;
        if hinge <= 0.0 {
            continue;
        }
        total += hinge;
        for c in 0..w {
            // d/df (|f-a|² - |f-b|²) = 2(f-a) - 2(f-b) = 2(b-a)
            grad.e_fused[(r, c)] = 2.0 * (b[c] - a[c]) * inv_k;
            grad.e_i[(r, c)] = -2.0 * (f[c] - a[c]) * inv_k;
            grad.e_j[(r, c)] = 2.0 * (f[c] - b[c]) * inv_k;
        }
    }
    (total * inv_k, grad)
}

/// Replaces the labels of every inconsistent sample with the classifier's
/// verdict on its fused representation (`f ≥ 0.5` → difficult). A sample in
/// several pairs (V > 2) takes the majority verdict, ties going to difficult.
pub fn resolve_labels(
    model: &AisModel,
    views: &[Matrix],
    assignment: &DifficultyAssignment,
) -> Result<DifficultyAssignment, AisError> {
    let pairs = collect_inconsistent(&assignment.views);
    let mut resolved = assignment.clone();
    if pairs.is_empty() {
        return Ok(resolved);
    }
    let verdicts = model.fused_difficulty(views, &pairs.pairs)?;
    let mut start = 0;
    while start < pairs.pairs.len() {
        let sample = pairs.pairs[start].sample;
        let end = start
            + pairs.pairs[start..]
                .iter()
                .take_while(|p| p.sample == sample)
                .count();
        let difficult = verdicts[start..end].iter().filter(|&&p| p >= 0.5).count();
        let label = if 2 * difficult >= end - start {
            Difficulty::Difficult
        } else {
            Difficulty::Easy
        };
        for v in &mut resolved.views {
            v.labels[sample] = label;
        }
        start = end;
    }
    Ok(resolved)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn partition(
        distances: Vec<f64>,
        positive: Vec<usize>,
        negative: Vec<usize>,
    ) -> NeighborPartition {
        NeighborPartition {
            view_index: 0,
            anchor_index: 0,
            positive,
            negative,
            distances,
        }
    }

    fn labels(values: &[u8]) -> ViewLabels {
        ViewLabels {
            view_index: 0,
            labels: values
                .iter()
                .map(|&v| {
                    if v == 0 {
                        Difficulty::Easy
                    } else {
                        Difficulty::Difficult
                    }
                })
                .collect(),
            regions: vec![None; values.len()],
        }
    }

    #[test]
    fn negative_region_threshold() {
        // anchor 0; P = {1}, N = {2, 3, 4} with d_max(N) = 10.
        let p = partition(vec![0.0, 1.0, 8.0, 5.0, 10.0], vec![1], vec![2, 3, 4]);
        let l = assign_difficulty(&p, 0.618).unwrap();
        assert_eq!(l.labels[2], Difficulty::Easy);
        assert_eq!(l.labels[3], Difficulty::Difficult);
        assert_eq!(l.labels[4], Difficulty::Easy);
        assert_eq!(l.labels[0], Difficulty::Easy);
        assert_eq!(l.regions[0], None);
    }

    #[test]
    fn positive_boundary_is_strict() {
        let mu = 0.5;
        // d_max(P) = 4, so the boundary sits exactly at 2.
        let p = partition(vec![0.0, 2.0, 4.0, 1.0, 9.0], vec![1, 2, 3], vec![4]);
        let l = assign_difficulty(&p, mu).unwrap();
        assert_eq!(l.labels[1], Difficulty::Difficult);
        assert_eq!(l.labels[2], Difficulty::Difficult);
        assert_eq!(l.labels[3], Difficulty::Easy);
    }

    #[test]
    fn empty_region_and_bad_mu_are_rejected() {
        let p = partition(vec![0.0, 1.0, 2.0], vec![1, 2], vec![]);
        assert!(matches!(
            assign_difficulty(&p, 0.6),
            Err(AisError::EmptyRegion {
                set: "negative",
                ..
            })
        ));
        let p = partition(vec![0.0, 1.0, 2.0], vec![1], vec![2]);
        assert!(matches!(
            assign_difficulty(&p, 1.0),
            Err(AisError::BadMu(_))
        ));
        assert!(matches!(
            assign_difficulty(&p, 0.0),
            Err(AisError::BadMu(_))
        ));
    }

    #[test]
    fn two_view_disagreement() {
        let set = collect_inconsistent(&[labels(&[0, 1]), labels(&[0, 0])]);
        assert_eq!(
            set.pairs,
            vec![InconsistentPair {
                sample: 1,
                view_a: 0,
                view_b: 1
            }]
        );
        assert!(collect_inconsistent(&[labels(&[0, 1]), labels(&[0, 1])]).is_empty());
    }

    #[test]
    fn three_view_disagreement_skips_agreeing_pair() {
        let set = collect_inconsistent(&[labels(&[0]), labels(&[1]), labels(&[0])]);
        let views: Vec<(usize, usize)> = set.pairs.iter().map(|p| (p.view_a, p.view_b)).collect();
        assert_eq!(views, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn fuse_concatenates() {
        assert_eq!(fuse_pair(&[1.0, 2.0], &[3.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(fuse_pair(&[0.0; 2], &[0.0; 3]), vec![0.0; 5]);
    }

    #[test]
    fn adv_loss_hand_values() {
        let v = adv_loss(&[0.9], &[0.1], 0.5);
        assert!((v - (-0.5 * (0.9f64.ln() + 0.9f64.ln()))).abs() < 1e-15);
        assert!((v - 0.105_360_515_657_826_3).abs() < 1e-12);
        let v = adv_loss(&[0.5], &[0.5], 1.0);
        assert!((v - 1.386_294_361_119_890_6).abs() < 1e-12);
        assert_eq!(adv_loss(&[0.2, 0.7], &[0.9, 0.3], 0.0), 0.0);
        assert_eq!(adv_loss(&[], &[], 0.5), 0.0);
    }

    #[test]
    fn sim_loss_hand_values() {
        let a = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let f = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        assert!((sim_loss(&a, &f, &b, 0.05) - 0.05).abs() < 1e-15);
        let far = Matrix::from_rows(&[[0.0, 3.0]]).unwrap();
        assert_eq!(sim_loss(&a, &f, &far, 0.05), 0.0);
        assert_eq!(sim_loss(&a, &a, &a, 0.0), 0.0);
    }
}
