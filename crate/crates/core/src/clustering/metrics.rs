//! ACC, NMI and purity from the cluster/class contingency table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use pathfinding::kuhn_munkres::kuhn_munkres;
use serde::{Deserialize, Serialize};

use super::ClusterError;

/// Counts of samples per (predicted cluster, true class). Rows and columns
/// follow the sorted order of the distinct label values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contingency {
    pub cluster_labels: Vec<usize>,
    pub class_labels: Vec<usize>,
    pub counts: Vec<Vec<u64>>,
}

impl Contingency {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self, ClusterError> {
        if pred.is_empty() {
            return Err(ClusterError::EmptyLabels);
        }
        if pred.len() != truth.len() {
            return Err(ClusterError::LabelLength {
                pred: pred.len(),
                truth: truth.len(),
            });
        }
        let index = |labels: &[usize]| -> BTreeMap<usize, usize> {
            let mut m: BTreeMap<usize, usize> = labels.iter().map(|&l| (l, 0)).collect();
            for (i, v) in m.values_mut().enumerate() {
                *v = i;
            }
            m
        };
        let rows = index(pred);
        let cols = index(truth);
        let mut counts = vec![vec![0u64; cols.len()]; rows.len()];
        for (p, t) in pred.iter().zip(truth) {
            counts[rows[p]][cols[t]] += 1;
        }
        Ok(Self {
            cluster_labels: rows.into_keys().collect(),
            class_labels: cols.into_keys().collect(),
            counts,
        })
    }

    /// Builds a table directly from counts (rows: clusters, columns: classes).
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, ClusterError> {
        let cols = counts.first().map_or(0, Vec::len);
        if counts.is_empty() || cols == 0 || counts.iter().any(|r| r.len() != cols) {
            return Err(ClusterError::EmptyLabels);
        }
        if counts.iter().flatten().sum::<u64>() == 0 {
            return Err(ClusterError::EmptyLabels);
        }
        Ok(Self {
            cluster_labels: (0..counts.len()).collect(),
            class_labels: (0..cols).collect(),
            counts,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        let mut s = vec![0; self.class_labels.len()];
        for row in &self.counts {
            for (acc, c) in s.iter_mut().zip(row) {
                *acc += c;
            }
        }
        s
    }

    /// Fraction of samples matched under the best one-to-one cluster/class mapping.
    pub fn accuracy(&self) -> f64 {
        let r = self.counts.len();
        let c = self.class_labels.len();
        let transpose = r > c;
        let (nr, nc) = if transpose { (c, r) } else { (r, c) };
        let mut values = Vec::with_capacity(nr * nc);
        for i in 0..nr {
            for j in 0..nc {
                let v = if transpose {
                    self.counts[j][i]
                } else {
                    self.counts[i][j]
                };
                values.push(v as i64);
            }
        }
        let weights =
            pathfinding::matrix::Matrix::from_vec(nr, nc, values).expect("non-empty table");
        let (matched, _) = kuhn_munkres(&weights);
        matched as f64 / self.total() as f64
    }

    /// Mutual information over the geometric mean of the two entropies.
    pub fn nmi(&self) -> f64 {
        let n = self.total() as f64;
        let entropy = |sums: &[u64]| -> f64 {
            sums.iter()
                .filter(|&&s| s > 0)
                .map(|&s| {
                    let p = s as f64 / n;
                    -p * p.ln()
                })
                .sum()
        };
        let rows = self.row_sums();
        let cols = self.col_sums();
        let h_pred = entropy(&rows);
        let h_truth = entropy(&cols);
        if h_pred == 0.0 || h_truth == 0.0 {
            // A single-cluster partition matches the truth only when it is single-class too.
            return if h_pred == 0.0 && h_truth == 0.0 {
                1.0
            } else {
                0.0
            };
        }
        let mut mi = 0.0;
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &nij) in row.iter().enumerate() {
                if nij > 0 {
                    let nij = nij as f64;
                    mi += nij / n * (n * nij / (rows[i] as f64 * cols[j] as f64)).ln();
                }
            }
        }
        (mi / (h_pred * h_truth).sqrt()).clamp(0.0, 1.0)
    }

    pub fn purity(&self) -> f64 {
        let best: u64 = self
            .counts
            .iter()
            .map(|r| r.iter().copied().max().unwrap_or(0))
            .sum();
        best as f64 / self.total() as f64
    }
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64, ClusterError> {
    Ok(Contingency::new(pred, truth)?.accuracy())
}

pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64, ClusterError> {
    Ok(Contingency::new(pred, truth)?.nmi())
}

pub fn purity(pred: &[usize], truth: &[usize]) -> Result<f64, ClusterError> {
    Ok(Contingency::new(pred, truth)?.purity())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub acc: f64,
    pub nmi: f64,
    pub purity: f64,
    pub contingency: Contingency,
}

pub const NMI_NORMALIZATION: &str = "geometric";

impl MetricReport {
    pub fn from_contingency(contingency: Contingency) -> Self {
        Self {
            acc: contingency.accuracy(),
            nmi: contingency.nmi(),
            purity: contingency.purity(),
            contingency,
        }
    }

    pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<Self, ClusterError> {
        Ok(Self::from_contingency(Contingency::new(pred, truth)?))
    }

    /// `key=value` lines, one per metric. Floats use the shortest exact form.
    pub fn to_kv(&self) -> String {
        format!(
            "acc={}\nnmi={}\npurity={}\nnmi_normalization={NMI_NORMALIZATION}\nclusters={}\nclasses={}\nsamples={}\n",
            self.acc,
            self.nmi,
            self.purity,
            self.contingency.cluster_labels.len(),
            self.contingency.class_labels.len(),
            self.contingency.total()
        )
    }

    /// Parses the output of [`MetricReport::to_kv`] back into `(acc, nmi, purity)`.
    pub fn parse_kv(text: &str) -> Option<(f64, f64, f64)> {
        let get = |key: &str| {
            text.lines()
                .find_map(|l| l.strip_prefix(key)?.strip_prefix('='))
                .and_then(|v| v.trim().parse::<f64>().ok())
        };
        Some((get("acc")?, get("nmi")?, get("purity")?))
    }

    /// Aligned text table with the metrics followed by the contingency table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "metric   value");
        let _ = writeln!(s, "ACC      {:.4}", self.acc);
        let _ = writeln!(s, "NMI      {:.4}  ({NMI_NORMALIZATION} mean)", self.nmi);
        let _ = writeln!(s, "Purity   {:.4}", self.purity);
        let _ = writeln!(s);
        let _ = write!(s, "cluster\\class");
        for c in &self.contingency.class_labels {
            let _ = write!(s, " {c:>6}");
        }
        let _ = writeln!(s);
        for (k, row) in self
            .contingency
            .cluster_labels
            .iter()
            .zip(&self.contingency.counts)
        {
            let _ = write!(s, "{k:>13}");
            for v in row {
                let _ = write!(s, " {v:>6}");
            }
            let _ = writeln!(s);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[&[u64]]) -> Contingency {
        Contingency::from_counts(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn two_by_two_example() {
        let t = table(&[&[5, 1], &[2, 4]]);
        assert!((t.accuracy() - 0.75).abs() < 1e-15);
        assert!((t.purity() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn relabelled_prediction_is_perfect() {
        let truth = [0, 0, 1, 1, 2, 2, 2];
        let pred = [7, 7, 3, 3, 5, 5, 5];
        let r = MetricReport::evaluate(&pred, &truth).unwrap();
        assert_eq!((r.acc, r.purity), (1.0, 1.0));
        assert!((r.nmi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_prediction_on_ten_balanced_classes() {
        let truth: Vec<usize> = (0..100).map(|i| i % 10).collect();
        let pred = vec![0; 100];
        let r = MetricReport::evaluate(&pred, &truth).unwrap();
        assert!((r.acc - 0.1).abs() < 1e-15);
        assert!((r.purity - 0.1).abs() < 1e-15);
        assert_eq!(r.nmi, 0.0);
    }

    #[test]
    fn single_cluster_against_single_class() {
        assert_eq!(nmi(&[3, 3, 3], &[1, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn independent_partitions_have_zero_nmi() {
        // Product table: rows (1, 2) times columns (1, 3).
        let t = table(&[&[1, 3], &[2, 6]]);
        assert!(t.nmi().abs() < 1e-12);
    }

    #[test]
    fn more_clusters_than_classes() {
        let t = table(&[&[3, 0], &[0, 2], &[1, 1]]);
        assert!((t.accuracy() - 5.0 / 7.0).abs() < 1e-15);
        assert!((t.purity() - 6.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn singleton_clusters_are_pure() {
        let truth = [0, 1, 0, 1, 1];
        assert_eq!(purity(&[0, 1, 2, 3, 4], &truth).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(accuracy(&[], &[]), Err(ClusterError::EmptyLabels)));
        assert!(matches!(
            nmi(&[0], &[0, 1]),
            Err(ClusterError::LabelLength { .. })
        ));
    }

    #[test]
    fn kv_round_trip() {
        let r = MetricReport::evaluate(&[0, 0, 1, 1, 1], &[0, 1, 1, 1, 0]).unwrap();
        let (a, n, p) = MetricReport::parse_kv(&r.to_kv()).unwrap();
        assert_eq!((a, n, p), (r.acc, r.nmi, r.purity));
        assert!(r.to_table().contains("ACC"));
    }
}
