//! Easy-to-difficult sampling.
//!
//! Every sample gets a probability per view: easy samples by their relative
//! distance to the anchor, difficult samples by their distance to the median
//! difficult distance. The cross-view mean `p̄` is thresholded by a pace `λ(t)`
//! that decays linearly, so the training set grows from the easiest few
//! percent to everything.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ais::{Difficulty, DifficultyAssignment};
use crate::data::{NeighborPartition, Region};

/// Gap kept between the clamped difficult probabilities and the smallest easy one.
pub const CLAMP_GAP: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SamplingError {
    #[error("degenerate geometry: d_max = {d_max} (must be > 0)")]
    ZeroMaxDistance { d_max: f64 },
    #[error("degenerate geometry: difficult distances sum to {sum} (must be > 0)")]
    ZeroDifficultMass { sum: f64 },
    #[error("view {view}, sample {sample}: {source}")]
    Sample {
        view: usize,
        sample: usize,
        #[source]
        source: Box<SamplingError>,
    },
    #[error("view {view}: {source}")]
    View {
        view: usize,
        #[source]
        source: Box<SamplingError>,
    },
    #[error("assignment has {labels} views but {partitions} partitions were given")]
    ViewCount { labels: usize, partitions: usize },
}

/// Probability of an easy sample at distance `d` from the anchor.
pub fn easy_prob(d: f64, d_max: f64, region: Region) -> Result<f64, SamplingError> {
    if !(d_max > 0.0) {
        return Err(SamplingError::ZeroMaxDistance { d_max });
    }
    let ratio = d / d_max;
    Ok(match region {
        Region::Negative => ratio,
        Region::Positive => 1.0 - ratio,
    })
}

/// Probability of a difficult sample: `|d − d_med| / Σ d_difficult`.
pub fn hard_prob(d: f64, d_med: f64, sum_d: f64) -> Result<f64, SamplingError> {
    if !(sum_d > 0.0) {
        return Err(SamplingError::ZeroDifficultMass { sum: sum_d });
    }
    Ok((d - d_med).abs() / sum_d)
}

/// Median; the mean of the two central values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 0 {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingState {
    /// `per_view[i][k]`: probability of sample `k` under view `i`.
    pub per_view: Vec<Vec<f64>>,
    /// Cross-view mean `p̄_k`.
    pub mean: Vec<f64>,
    /// Views in which difficult probabilities had to be clamped below the
    /// smallest easy probability.
    pub clamp_events: usize,
}

impl SamplingState {
    pub fn n_samples(&self) -> usize {
        self.mean.len()
    }

    /// `p̄` sorted in descending order.
    pub fn sorted_descending(&self) -> Vec<f64> {
        let mut v = self.mean.clone();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    /// A state where every sample has probability 1 (no curriculum).
    pub fn uniform(n_samples: usize, n_views: usize) -> Self {
        Self {
            per_view: vec![vec![1.0; n_samples]; n_views],
            mean: vec![1.0; n_samples],
            clamp_events: 0,
        }
    }
}

/// Raw probabilities for one view, before any clamping.
fn view_probabilities(
    labels: &[Difficulty],
    partition: &NeighborPartition,
) -> Result<(Vec<f64>, Vec<bool>), SamplingError> {
    let regions = partition.regions();
    let d = &partition.distances;
    let d_max = partition.max_distance_overall().unwrap_or(0.0);
    let difficult: Vec<f64> = (0..d.len())
        .filter(|&k| labels[k] == Difficulty::Difficult && regions[k].is_some())
        .map(|k| d[k])
        .collect();
    let d_med = median(&difficult).unwrap_or(0.0);
    let sum_d: f64 = difficult.iter().sum();

    let mut probs = Vec::with_capacity(d.len());
    let mut is_easy = Vec::with_capacity(d.len());
    for k in 0..d.len() {
        let ctx = |e| SamplingError::Sample {
            view: partition.view_index,
            sample: k,
            source: Box::new(e),
        };
        let (p, easy) = match (labels[k], regions[k]) {
            // The anchor is its own nearest positive.
            (_, None) => (1.0, true),
            (Difficulty::Easy, Some(region)) => {
                (easy_prob(d[k], d_max, region).map_err(ctx)?, true)
            }
            (Difficulty::Difficult, Some(_)) => {
                (hard_prob(d[k], d_med, sum_d).map_err(ctx)?, false)
            }
        };
        probs.push(p);
        is_easy.push(easy);
    }
    Ok((probs, is_easy))
}

/// Per-view probabilities from resolved labels, and their cross-view mean.
pub fn compute_probabilities(
    assignment: &DifficultyAssignment,
    partitions: &[NeighborPartition],
) -> Result<SamplingState, SamplingError> {
    if assignment.views.len() != partitions.len() {
        return Err(SamplingError::ViewCount {
            labels: assignment.views.len(),
            partitions: partitions.len(),
        });
    }
    let n = assignment.n_samples();
    let mut per_view = Vec::with_capacity(partitions.len());
    let mut clamp_events = 0;
    for (labels, partition) in assignment.views.iter().zip(partitions) {
        let (mut probs, is_easy) = view_probabilities(&labels.labels, partition)?;
        let min_easy = probs
            .iter()
            .zip(&is_easy)
            .filter(|(_, &e)| e)
            .map(|(&p, _)| p)
            .fold(f64::INFINITY, f64::min);
        let violates = probs
            .iter()
            .zip(&is_easy)
            .any(|(&p, &e)| !e && p >= min_easy);
        if violates {
            let cap = (min_easy - CLAMP_GAP).max(0.0);
            for (p, &e) in probs.iter_mut().zip(&is_easy) {
                if !e {
                    *p = p.clamp(0.0, cap);
                }
            }
            clamp_events += 1;
            log::warn!(
                "view {}: difficult probabilities clamped below the smallest easy probability {min_easy:.6}",
                partition.view_index
            );
        }
        per_view.push(probs);
    }
    let v = per_view.len() as f64;
    let mean = (0..n)
        .map(|k| per_view.iter().map(|p| p[k]).sum::<f64>() / v)
        .collect();
    Ok(SamplingState {
        per_view,
        mean,
        clamp_events,
    })
}

/// Probabilities from a single view's labels and partition (used when one
/// view drives the curriculum for all).
pub fn single_view_probabilities(
    labels: &[Difficulty],
    partition: &NeighborPartition,
) -> Result<SamplingState, SamplingError> {
    let assignment = DifficultyAssignment {
        mu: 0.0,
        views: vec![crate::ais::ViewLabels {
            view_index: partition.view_index,
            labels: labels.to_vec(),
            regions: partition.regions(),
        }],
    };
    compute_probabilities(&assignment, std::slice::from_ref(partition))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PaceSchedule {
    /// Fraction of samples selected at epoch 0.
    pub initial_fraction: f64,
    /// Fraction of `max_epochs` after which every sample is selected.
    pub full_inclusion_fraction: f64,
    pub max_epochs: usize,
}

impl Default for PaceSchedule {
    fn default() -> Self {
        Self {
            initial_fraction: 0.05,
            full_inclusion_fraction: 0.8,
            max_epochs: 300,
        }
    }
}

impl PaceSchedule {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.initial_fraction > 0.0 && self.initial_fraction <= 1.0) {
            return Err(format!(
                "initial_fraction must lie in (0, 1], got {}",
                self.initial_fraction
            ));
        }
        if !(self.full_inclusion_fraction > 0.0 && self.full_inclusion_fraction <= 1.0) {
            return Err(format!(
                "full_inclusion_fraction must lie in (0, 1], got {}",
                self.full_inclusion_fraction
            ));
        }
        if self.max_epochs == 0 {
            return Err("max_epochs must be >= 1".into());
        }
        Ok(())
    }

    /// Number of samples the starting pace admits (absent ties): `⌈f·n⌉`.
    pub fn initial_count(&self, n_samples: usize) -> usize {
        let raw = self.initial_fraction * n_samples as f64;
        // Guard against products like 0.05 * 100 landing a hair above an integer.
        ((raw - 1e-9).ceil() as usize).clamp(1, n_samples.max(1))
    }

    /// First epoch at which the pace reaches zero.
    pub fn full_inclusion_epoch(&self) -> f64 {
        self.full_inclusion_fraction * self.max_epochs as f64
    }
}

/// Pace `λ(t)`: the `⌈f·n⌉`-th largest `p̄` at epoch 0, decaying linearly to
/// zero at `full_inclusion_fraction · max_epochs` and zero afterwards.
pub fn pace_value(schedule: &PaceSchedule, epoch: usize, sorted_desc: &[f64]) -> f64 {
    if sorted_desc.is_empty() {
        return 0.0;
    }
    let start = sorted_desc[schedule.initial_count(sorted_desc.len()) - 1];
    let t_full = schedule.full_inclusion_epoch();
    let t = epoch as f64;
    if t >= t_full {
        0.0
    } else {
        start * (1.0 - t / t_full)
    }
}

/// `h_k = 1` iff `λ ≤ p̄_k`; one mask shared by all views.
pub fn selection_mask(mean: &[f64], lambda: f64) -> Vec<bool> {
    mean.iter().map(|&p| lambda <= p).collect()
}

pub fn selected_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter(|(_, &h)| h)
        .map(|(k, _)| k)
        .collect()
}

/// Appends one epoch of `(epoch, sample_index, p̄, selected)` rows.
pub fn write_sampling_dump<W: Write>(
    mut out: W,
    epoch: usize,
    mean: &[f64],
    mask: &[bool],
) -> std::io::Result<()> {
    for (k, (p, h)) in mean.iter().zip(mask).enumerate() {
        writeln!(out, "{epoch},{k},{p},{}", u8::from(*h))?;
    }
    Ok(())
}

pub const SAMPLING_DUMP_HEADER: &str = "epoch,sample_index,p_mean,selected";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn easy_prob_hand_values() {
        assert!((easy_prob(8.0, 10.0, Region::Negative).unwrap() - 0.8).abs() < 1e-15);
        assert!((easy_prob(2.0, 10.0, Region::Positive).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(easy_prob(10.0, 10.0, Region::Negative).unwrap(), 1.0);
        assert!(easy_prob(1.0, 0.0, Region::Negative).is_err());
    }

    #[test]
    fn hard_prob_hand_values() {
        let d = [3.0, 4.0, 5.0];
        let med = median(&d).unwrap();
        let sum: f64 = d.iter().sum();
        assert_eq!(med, 4.0);
        assert!((hard_prob(3.0, med, sum).unwrap() - 1.0 / 12.0).abs() < 1e-15);
        assert!((hard_prob(5.0, med, sum).unwrap() - 1.0 / 12.0).abs() < 1e-15);
        assert_eq!(hard_prob(4.0, med, sum).unwrap(), 0.0);
        assert!(hard_prob(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn even_median_averages_central_values() {
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn mask_examples() {
        assert_eq!(selection_mask(&[0.8, 0.4], 0.5), vec![true, false]);
        assert_eq!(selection_mask(&[0.8, 0.4, 0.0], 0.0), vec![true; 3]);
        assert_eq!(selection_mask(&[0.8, 0.4], 0.8 + 1e-12), vec![false, false]);
    }

    #[test]
    fn pace_schedule_endpoints() {
        let schedule = PaceSchedule {
            max_epochs: 100,
            ..PaceSchedule::default()
        };
        let mean: Vec<f64> = (0..100).map(|k| ((k * 37) % 100) as f64 / 100.0).collect();
        let mut sorted = mean.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let lambda0 = pace_value(&schedule, 0, &sorted);
        let mask = selection_mask(&mean, lambda0);
        assert_eq!(mask.iter().filter(|&&h| h).count(), 5);
        assert_eq!(pace_value(&schedule, 80, &sorted), 0.0);
        assert_eq!(pace_value(&schedule, 99, &sorted), 0.0);
        let mut prev = f64::INFINITY;
        for t in 0..100 {
            let l = pace_value(&schedule, t, &sorted);
            assert!(l <= prev);
            prev = l;
        }
    }

    #[test]
    fn initial_count_rounds_up() {
        let s = PaceSchedule::default();
        assert_eq!(s.initial_count(100), 5);
        assert_eq!(s.initial_count(2000), 100);
        assert_eq!(s.initial_count(301), 16);
        assert_eq!(s.initial_count(3), 1);
    }

    #[test]
    fn probabilities_for_small_partition() {
        // anchor 0; P = {1, 2, 3}; N = {4, 5, 6, 7}.
        let partition = NeighborPartition {
            view_index: 0,
            anchor_index: 0,
            positive: vec![1, 2, 3],
            negative: vec![4, 5, 6, 7],
            distances: vec![0.0, 0.5, 2.0, 2.5, 3.0, 4.0, 9.0, 10.0],
        };
        let labels = crate::ais::assign_difficulty(&partition, 0.618).unwrap();
        let state = single_view_probabilities(&labels.labels, &partition).unwrap();
        let p = &state.per_view[0];
        assert_eq!(p[0], 1.0);
        assert!((p[1] - 0.95).abs() < 1e-15);
        assert!((p[6] - 0.9).abs() < 1e-15);
        assert!((p[7] - 1.0).abs() < 1e-15);
        // difficult: 2.0, 2.5, 3.0, 4.0 → median 2.75, sum 11.5
        assert!((p[2] - 0.75 / 11.5).abs() < 1e-15);
        assert!((p[5] - 1.25 / 11.5).abs() < 1e-15);
        assert_eq!(state.clamp_events, 0);
    }

    #[test]
    fn dump_format() {
        let mut buf = Vec::new();
        write_sampling_dump(&mut buf, 3, &[0.5, 0.25], &[true, false]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "3,0,0.5,1\n3,1,0.25,0\n");
    }
}
