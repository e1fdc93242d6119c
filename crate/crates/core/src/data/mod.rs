//! Multi-view datasets: loading, per-view normalization, Euclidean distances
//! and the anchor-centred positive/negative split.

mod manifest;

pub use manifest::{Manifest, ViewEntry};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numeric::{seeded_rng, squared_distance, Matrix};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: row {row}, column {col}: cannot parse {value:?} as a finite number")]
    Parse {
        path: PathBuf,
        row: usize,
        col: usize,
        value: String,
    },
    #[error("{path}: row {row} has {found} columns, expected {expected}")]
    Ragged {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row count mismatch: {first} has {first_rows} rows but {other} has {other_rows}")]
    RowMismatch {
        first: PathBuf,
        first_rows: usize,
        other: PathBuf,
        other_rows: usize,
    },
    #[error("a multi-view dataset needs at least 2 views, got {0}")]
    TooFewViews(usize),
    #[error("view {view} has {found} rows, expected {expected}")]
    ViewRows {
        view: usize,
        expected: usize,
        found: usize,
    },
    #[error("{0} is empty")]
    Empty(String),
    #[error("label count {found} does not match sample count {expected}")]
    LabelCount { expected: usize, found: usize },
    #[error("{path}: line {line}: invalid class id {value:?}")]
    BadLabel {
        path: PathBuf,
        line: usize,
        value: String,
    },
    #[error("invalid manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("index {index} out of range for {len} samples")]
    OutOfRange { index: usize, len: usize },
    #[error("k_neighbors must lie in 1..={max}, got {k}")]
    BadNeighborCount { k: usize, max: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `n` samples seen under `V ≥ 2` views; view `i` is an `n × d_i` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    views: Vec<Matrix>,
    labels: Option<Vec<usize>>,
}

impl MultiViewDataset {
    pub fn new(views: Vec<Matrix>, labels: Option<Vec<usize>>) -> Result<Self, DataError> {
        if views.len() < 2 {
            return Err(DataError::TooFewViews(views.len()));
        }
        let n = views[0].rows();
        if n == 0 {
            return Err(DataError::Empty("view 0".into()));
        }
        for (i, v) in views.iter().enumerate() {
            if v.rows() != n {
                return Err(DataError::ViewRows {
                    view: i,
                    expected: n,
                    found: v.rows(),
                });
            }
            if v.cols() == 0 {
                return Err(DataError::Empty(format!("view {i}")));
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(DataError::LabelCount {
                    expected: n,
                    found: labels.len(),
                });
            }
        }
        Ok(Self { views, labels })
    }

    pub fn n_samples(&self) -> usize {
        self.views[0].rows()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn view(&self, i: usize) -> &Matrix {
        &self.views[i]
    }

    pub fn views(&self) -> &[Matrix] {
        &self.views
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(Matrix::cols).collect()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of distinct class ids, when labels are present.
    pub fn n_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| {
            let mut ids = l.clone();
            ids.sort_unstable();
            ids.dedup();
            ids.len()
        })
    }

    pub fn normalized(&self, modes: &[Normalization]) -> Self {
        let views = self
            .views
            .iter()
            .enumerate()
            .map(|(i, v)| normalize_view(v, modes.get(i).copied().unwrap_or_default()))
            .collect();
        Self {
            views,
            labels: self.labels.clone(),
        }
    }

    /// All views side by side, `n × Σ d_i`.
    pub fn concatenated(&self) -> Matrix {
        let mut out = self.views[0].clone();
        for v in &self.views[1..] {
            out = out.hstack(v).expect("views share the row count");
        }
        out
    }
}

/// Reads one CSV per view (no header, one sample per row) and an optional
/// label file with one integer class id per line.
pub fn load_views<P: AsRef<Path>>(
    paths: &[P],
    label_path: Option<&Path>,
) -> Result<MultiViewDataset, DataError> {
    if paths.len() < 2 {
        return Err(DataError::TooFewViews(paths.len()));
    }
    let mut views = Vec::with_capacity(paths.len());
    for path in paths {
        views.push(read_matrix_csv(path.as_ref())?);
    }
    let first = paths[0].as_ref();
    for (path, view) in paths.iter().zip(&views).skip(1) {
        if view.rows() != views[0].rows() {
            return Err(DataError::RowMismatch {
                first: first.to_path_buf(),
                first_rows: views[0].rows(),
                other: path.as_ref().to_path_buf(),
                other_rows: view.rows(),
            });
        }
    }
    let labels = label_path.map(read_labels).transpose()?;
    MultiViewDataset::new(views, labels)
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let expected = *cols.get_or_insert(record.len());
        if record.len() != expected {
            return Err(DataError::Ragged {
                path: path.to_path_buf(),
                row: r + 1,
                expected,
                found: record.len(),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let value = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DataError::Parse {
                    path: path.to_path_buf(),
                    row: r + 1,
                    col: c + 1,
                    value: field.to_string(),
                })?;
            data.push(value);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| DataError::Empty(path.display().to_string()))?;
    Ok(Matrix::from_vec(rows, cols, data).expect("rows checked"))
}

fn csv_err(path: &Path, e: csv::Error) -> DataError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => DataError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => DataError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{other:?}")),
        },
    }
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let id = line.parse::<usize>().map_err(|_| DataError::BadLabel {
            path: path.to_path_buf(),
            line: i + 1,
            value: line.to_string(),
        })?;
        labels.push(id);
    }
    Ok(labels)
}

/// Writes a view as headerless CSV. Values use the shortest representation
/// that parses back to the same `f64`.
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<(), DataError> {
    let mut out = String::with_capacity(m.rows() * m.cols() * 12);
    for row in m.iter_rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<(), DataError> {
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    for l in labels {
        writeln!(file, "{l}").map_err(io_err(path))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    Zscore,
    Minmax,
    None,
}

/// Column-wise normalization. Z-score uses the population standard
/// deviation; constant columns map to zero under both modes.
pub fn normalize_view(view: &Matrix, mode: Normalization) -> Matrix {
    let (n, d) = view.shape();
    let mut out = view.clone();
    if mode == Normalization::None || n == 0 {
        return out;
    }
    for j in 0..d {
        let col = view.column_values(j);
        match mode {
            Normalization::Zscore => {
                let mean = col.iter().sum::<f64>() / n as f64;
                let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
                let sd = var.sqrt();
                for (i, x) in col.iter().enumerate() {
                    out[(i, j)] = if sd > 0.0 { (x - mean) / sd } else { 0.0 };
                }
            }
            Normalization::Minmax => {
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let range = hi - lo;
                for (i, x) in col.iter().enumerate() {
                    out[(i, j)] = if range > 0.0 {
                        ((x - lo) / range).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                }
            }
            Normalization::None => unreachable!(),
        }
    }
    out
}

/// Symmetric `n × n` Euclidean distance matrix with an exact zero diagonal.
pub fn pairwise_distances(view: &Matrix) -> Matrix {
    let n = view.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = squared_distance(view.row(i), view.row(j)).sqrt();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Euclidean distance from `anchor` to every sample of `view`.
pub fn distances_to(view: &Matrix, anchor: usize) -> Vec<f64> {
    let a = view.row(anchor);
    view.iter_rows()
        .map(|r| squared_distance(r, a).sqrt())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Positive,
    Negative,
}

impl Region {
    pub fn tag(self) -> &'static str {
        match self {
            Region::Positive => "P",
            Region::Negative => "N",
        }
    }
}

/// Anchor-centred split of one view: `positive` holds the `k` nearest
/// non-anchor samples, `negative` all remaining non-anchor samples.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborPartition {
    pub view_index: usize,
    pub anchor_index: usize,
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
    /// Distance of every sample to the anchor (the anchor's own entry is 0).
    pub distances: Vec<f64>,
}

impl NeighborPartition {
    pub fn n_samples(&self) -> usize {
        self.distances.len()
    }

    /// Region of sample `k`; `None` for the anchor itself.
    pub fn regions(&self) -> Vec<Option<Region>> {
        let mut out = vec![None; self.n_samples()];
        for &k in &self.positive {
            out[k] = Some(Region::Positive);
        }
        for &k in &self.negative {
            out[k] = Some(Region::Negative);
        }
        out
    }

    pub fn max_distance(&self, region: Region) -> Option<f64> {
        let set = match region {
            Region::Positive => &self.positive,
            Region::Negative => &self.negative,
        };
        set.iter().map(|&k| self.distances[k]).reduce(f64::max)
    }

    /// Largest distance over all non-anchor samples.
    pub fn max_distance_overall(&self) -> Option<f64> {
        self.positive
            .iter()
            .chain(&self.negative)
            .map(|&k| self.distances[k])
            .reduce(f64::max)
    }
}

/// Splits view `view_index` around `anchor_index` by K-NN. Ties at equal
/// distance go to the lower sample index.
pub fn build_partition(
    dataset: &MultiViewDataset,
    view_index: usize,
    anchor_index: usize,
    k_neighbors: usize,
) -> Result<NeighborPartition, DataError> {
    if view_index >= dataset.n_views() {
        return Err(DataError::OutOfRange {
            index: view_index,
            len: dataset.n_views(),
        });
    }
    partition_view(
        dataset.view(view_index),
        view_index,
        anchor_index,
        k_neighbors,
    )
}

pub fn partition_view(
    view: &Matrix,
    view_index: usize,
    anchor_index: usize,
    k_neighbors: usize,
) -> Result<NeighborPartition, DataError> {
    let n = view.rows();
    if anchor_index >= n {
        return Err(DataError::OutOfRange {
            index: anchor_index,
            len: n,
        });
    }
    if k_neighbors == 0 || k_neighbors + 1 > n {
        return Err(DataError::BadNeighborCount {
            k: k_neighbors,
            max: n.saturating_sub(1),
        });
    }
    let distances = distances_to(view, anchor_index);
    let mut order: Vec<usize> = (0..n).filter(|&k| k != anchor_index).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(a.cmp(&b)));
    let negative = order.split_off(k_neighbors);
    Ok(NeighborPartition {
        view_index,
        anchor_index,
        positive: order,
        negative,
        distances,
    })
}

/// Uniformly drawn anchor index, shared by all views.
pub fn choose_anchor(n_samples: usize, seed: u64) -> usize {
    seeded_rng(seed, crate::streams::ANCHOR).random_range(0..n_samples)
}

pub fn default_k_neighbors(n_samples: usize) -> usize {
    (n_samples / 2).max(1)
}
