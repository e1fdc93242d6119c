//! Gaussian-blob multi-view benchmark.
//!
//! Cluster `c` has latent center `separation · e_c` in `q = max(clusters, 2)`
//! dimensions and isotropic spread `spread`. Each view maps the latent points
//! through its own random linear map and adds Gaussian noise of standard
//! deviation `noise`.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::data::{
    write_labels, write_matrix_csv, Manifest, MultiViewDataset, Normalization, ViewEntry,
};
use crate::numeric::{seeded_rng, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub clusters: usize,
    pub samples: usize,
    pub views: usize,
    pub noise: f64,
    pub seed: u64,
    /// Per-view feature counts; `8 + 6·v` when empty.
    pub view_dims: Vec<usize>,
    pub separation: f64,
    pub spread: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            clusters: 3,
            samples: 300,
            views: 2,
            noise: 0.1,
            seed: 0,
            view_dims: Vec::new(),
            separation: 4.0,
            spread: 0.5,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.clusters < 2 {
            return bad(format!("clusters must be >= 2, got {}", self.clusters));
        }
        if self.samples < 10 * self.clusters {
            return bad(format!(
                "samples must be >= 10 per cluster ({}), got {}",
                10 * self.clusters,
                self.samples
            ));
        }
        if self.views < 2 {
            return bad(format!("views must be >= 2, got {}", self.views));
        }
        if !self.view_dims.is_empty()
            && (self.view_dims.len() != self.views || self.view_dims.contains(&0))
        {
            return bad(format!(
                "view_dims must list {} positive widths, got {:?}",
                self.views, self.view_dims
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be finite and >= 0, got {}", self.noise));
        }
        if !(self.separation > 0.0 && self.spread >= 0.0) {
            return bad("separation must be > 0 and spread >= 0".into());
        }
        Ok(())
    }

    pub fn dims(&self) -> Vec<usize> {
        if self.view_dims.is_empty() {
            (0..self.views).map(|v| 8 + 6 * v).collect()
        } else {
            self.view_dims.clone()
        }
    }
}

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("length matches")
}

/// Generates the dataset in memory.
pub fn generate(spec: &SynthSpec) -> Result<MultiViewDataset, ExperimentError> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed, crate::streams::SYNTH);
    let q = spec.clusters.max(2);
    let n = spec.samples;
    let mut labels: Vec<usize> = (0..n).map(|k| k % spec.clusters).collect();
    labels.shuffle(&mut rng);

    let mut latent = normal_matrix(n, q, spec.spread, &mut rng);
    for (k, &c) in labels.iter().enumerate() {
        latent.row_mut(k)[c] += spec.separation;
    }
    let views = spec
        .dims()
        .into_iter()
        .map(|d| {
            let map = normal_matrix(q, d, 1.0 / (q as f64).sqrt(), &mut rng);
            let clean = latent.matmul(&map).expect("shapes agree");
            let noise = normal_matrix(n, d, spec.noise, &mut rng);
            clean.add(&noise).expect("shapes agree")
        })
        .collect();
    Ok(MultiViewDataset::new(views, Some(labels))?)
}

/// Writes `view_<v>.csv`, `labels.csv` and `manifest.toml` to `dir`.
/// Returns the manifest path.
pub fn make_synthetic(spec: &SynthSpec, dir: &Path) -> Result<PathBuf, ExperimentError> {
    let data = generate(spec)?;
    std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let mut entries = Vec::new();
    for (v, view) in data.views().iter().enumerate() {
        let name = format!("view_{v}.csv");
        write_matrix_csv(&dir.join(&name), view)?;
        entries.push(ViewEntry {
            path: PathBuf::from(name),
            normalize: Normalization::Zscore,
        });
    }
    write_labels(
        &dir.join("labels.csv"),
        data.labels().expect("synthetic data is labelled"),
    )?;
    let manifest_path = dir.join("manifest.toml");
    Manifest::new(entries, Some(PathBuf::from("labels.csv"))).write(&manifest_path)?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_balance() {
        let spec = SynthSpec {
            clusters: 4,
            samples: 80,
            views: 3,
            ..SynthSpec::default()
        };
        let d = generate(&spec).unwrap();
        assert_eq!(d.n_samples(), 80);
        assert_eq!(d.view_dims(), vec![8, 14, 20]);
        let labels = d.labels().unwrap();
        for c in 0..4 {
            assert_eq!(labels.iter().filter(|&&l| l == c).count(), 20);
        }
    }

    #[test]
    fn seed_controls_the_data() {
        let a = generate(&SynthSpec::default()).unwrap();
        let b = generate(&SynthSpec::default()).unwrap();
        let c = generate(&SynthSpec {
            seed: 1,
            ..SynthSpec::default()
        })
        .unwrap();
        assert_eq!(a.views(), b.views());
        assert_ne!(a.views(), c.views());
    }

    #[test]
    fn rejects_tiny_specs() {
        for spec in [
            SynthSpec {
                clusters: 1,
                ..SynthSpec::default()
            },
            SynthSpec {
                samples: 29,
                ..SynthSpec::default()
            },
            SynthSpec {
                views: 1,
                ..SynthSpec::default()
            },
        ] {
            assert!(matches!(generate(&spec), Err(ExperimentError::Config(_))));
        }
    }
}
