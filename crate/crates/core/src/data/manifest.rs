//! Dataset manifest: a small TOML file naming the view CSVs, an optional
//! label file and the normalization applied to each view.
//!
//! ```toml
//! labels = "labels.txt"
//!
//! [[views]]
//! path = "view_0.csv"
//! normalize = "zscore"
//!
//! [[views]]
//! path = "view_1.csv"
//! normalize = "minmax"
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_views, DataError, MultiViewDataset, Normalization};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEntry {
    pub path: PathBuf,
    #[serde(default)]
    pub normalize: Normalization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    pub views: Vec<ViewEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Manifest {
    pub fn new(views: Vec<ViewEntry>, labels: Option<PathBuf>) -> Self {
        Self {
            labels,
            views,
            base_dir: PathBuf::new(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut manifest: Manifest = toml::from_str(&text).map_err(|e| DataError::Manifest {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })?;
        if manifest.views.len() < 2 {
            return Err(DataError::TooFewViews(manifest.views.len()));
        }
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        let text = toml::to_string(self).map_err(|e| DataError::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        fs::write(path, text).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn view_paths(&self) -> Vec<PathBuf> {
        self.views.iter().map(|v| self.resolve(&v.path)).collect()
    }

    pub fn label_path(&self) -> Option<PathBuf> {
        self.labels.as_deref().map(|p| self.resolve(p))
    }

    pub fn normalizations(&self) -> Vec<Normalization> {
        self.views.iter().map(|v| v.normalize).collect()
    }

    /// Loads the raw views without normalization.
    pub fn load_raw(&self) -> Result<MultiViewDataset, DataError> {
        load_views(&self.view_paths(), self.label_path().as_deref())
    }

    /// Loads and normalizes every view as configured.
    pub fn load(&self) -> Result<MultiViewDataset, DataError> {
        Ok(self.load_raw()?.normalized(&self.normalizations()))
    }
}
