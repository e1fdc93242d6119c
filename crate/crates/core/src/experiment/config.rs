use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::ais::AisConfig;
use crate::clustering::KMeansConfig;
use crate::mvnet::{NetworkConfig, GOLDEN_SECTION};
use crate::numeric::AdamConfig;

/// Which pipeline stages are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// All samples from the first epoch, gate forced open.
    #[serde(rename = "NONE")]
    None,
    /// Curriculum from the best single view's raw labels, gate forced open.
    #[serde(rename = "CS")]
    Cs,
    /// As `CS`, with the golden-section gate.
    #[serde(rename = "CS+GS")]
    CsGs,
    /// Curriculum from reconciled labels, gate forced open.
    #[serde(rename = "AIS+CS")]
    AisCs,
    /// Reconciled labels, curriculum and gate.
    #[serde(rename = "FULL")]
    Full,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::None,
        Variant::Cs,
        Variant::CsGs,
        Variant::AisCs,
        Variant::Full,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::None => "NONE",
            Variant::Cs => "CS",
            Variant::CsGs => "CS+GS",
            Variant::AisCs => "AIS+CS",
            Variant::Full => "FULL",
        }
    }

    pub fn uses_ais(self) -> bool {
        matches!(self, Variant::AisCs | Variant::Full)
    }

    pub fn uses_sampling(self) -> bool {
        self != Variant::None
    }

    pub fn uses_gate(self) -> bool {
        matches!(self, Variant::CsGs | Variant::Full)
    }

    /// File-name friendly tag.
    pub fn slug(self) -> &'static str {
        match self {
            Variant::None => "none",
            Variant::Cs => "cs",
            Variant::CsGs => "cs_gs",
            Variant::AisCs => "ais_cs",
            Variant::Full => "full",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.tag().eq_ignore_ascii_case(s) || v.slug() == s)
            .ok_or_else(|| {
                ExperimentError::Config(format!(
                    "unknown variant {s:?}; expected one of NONE, CS, CS+GS, AIS+CS, FULL"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    /// Size of the positive neighbourhood; `n / 2` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_neighbors: Option<usize>,
    pub initial_fraction: f64,
    pub full_inclusion_fraction: f64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            k_neighbors: None,
            initial_fraction: 0.05,
            full_inclusion_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    /// Gate threshold as a fraction of the sample count.
    pub sigma: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 64,
            sigma: GOLDEN_SECTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Write `sampling_dump.csv` with the per-epoch selection mask.
    pub sampling_dump: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset manifest; relative paths resolve against the config file.
    pub manifest: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Number of clusters; taken from the labels when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters: Option<usize>,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub ais: AisConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub kmeans: KMeansConfig,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_variant() -> Variant {
    Variant::Full
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    pub fn new(manifest: impl Into<PathBuf>) -> Self {
        Self {
            manifest: manifest.into(),
            seed: 0,
            variant: default_variant(),
            output_dir: default_output_dir(),
            clusters: None,
            sampling: SamplingSection::default(),
            ais: AisConfig::default(),
            network: NetworkConfig::default(),
            adam: AdamConfig::default(),
            training: TrainingSection::default(),
            kmeans: KMeansConfig::default(),
            output: OutputSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let config: Self =
            toml::from_str(text).map_err(|e| ExperimentError::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file and resolves a relative manifest path against its directory.
    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        if config.manifest.is_relative() {
            if let Some(dir) = path.parent() {
                config.manifest = dir.join(&config.manifest);
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let err =
            |section: &str, msg: String| Err(ExperimentError::Config(format!("[{section}] {msg}")));
        if let Err(m) = self.ais.validate() {
            return err("ais", m);
        }
        if let Err(m) = self.network.validate() {
            return err("network", m);
        }
        if let Err(m) = self.adam.validate() {
            return err("adam", m);
        }
        if let Err(m) = self.pace().validate() {
            return err("sampling", m);
        }
        if self.training.batch_size == 0 {
            return err("training", "batch_size must be >= 1".into());
        }
        if !(self.training.sigma > 0.0 && self.training.sigma < 1.0) {
            return err(
                "training",
                format!("sigma must lie in (0, 1), got {}", self.training.sigma),
            );
        }
        if self.kmeans.restarts == 0 || self.kmeans.max_iter == 0 {
            return err("kmeans", "restarts and max_iter must be >= 1".into());
        }
        if self.clusters == Some(0) {
            return Err(ExperimentError::Config("clusters must be >= 1".into()));
        }
        if self.sampling.k_neighbors == Some(0) {
            return err("sampling", "k_neighbors must be >= 1".into());
        }
        Ok(())
    }

    pub fn pace(&self) -> crate::sampling::PaceSchedule {
        crate::sampling::PaceSchedule {
            initial_fraction: self.sampling.initial_fraction,
            full_inclusion_fraction: self.sampling.full_inclusion_fraction,
            max_epochs: self.training.epochs,
        }
    }
}
