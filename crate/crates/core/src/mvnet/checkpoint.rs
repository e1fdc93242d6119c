//! Versioned JSON snapshot of a trained model.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MultiViewModel, MvnetError};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub epochs_trained: usize,
    pub model: MultiViewModel,
}

impl Checkpoint {
    pub fn new(model: MultiViewModel, seed: u64, epochs_trained: usize) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            seed,
            epochs_trained,
            model,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), MvnetError> {
        let file = File::create(path)
            .map_err(|e| MvnetError::Checkpoint(format!("{}: {e}", path.display())))?;
        serde_json::to_writer(BufWriter::new(file), self)
            .map_err(|e| MvnetError::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, MvnetError> {
        let file = File::open(path)
            .map_err(|e| MvnetError::Checkpoint(format!("{}: {e}", path.display())))?;
        let ckpt: Self = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| MvnetError::Checkpoint(e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(MvnetError::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        for nets in &ckpt.model.views {
            for mlp in [&nets.encoder, &nets.generator, &nets.discriminator] {
                mlp.params.check_against(&mlp.spec)?;
            }
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mvnet::NetworkConfig;
    use crate::numeric::{seeded_rng, AdamConfig};

    #[test]
    fn round_trip_is_exact() {
        let config = NetworkConfig {
            encoder_hidden: vec![6],
            latent_width: 3,
            discriminator_hidden: vec![4, 2],
            ..NetworkConfig::default()
        };
        let model = MultiViewModel::new(
            config,
            &[5, 7],
            AdamConfig::default(),
            &mut seeded_rng(9, 0),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let ckpt = Checkpoint::new(model, 9, 0);
        ckpt.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ckpt);
    }

    #[test]
    fn rejects_other_versions() {
        let model = MultiViewModel::new(
            NetworkConfig {
                encoder_hidden: vec![2],
                latent_width: 1,
                discriminator_hidden: vec![2, 2],
                ..NetworkConfig::default()
            },
            &[2, 2],
            AdamConfig::default(),
            &mut seeded_rng(1, 0),
        )
        .unwrap();
        let mut ckpt = Checkpoint::new(model, 1, 0);
        ckpt.version = 99;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        ckpt.save(&path).unwrap();
        assert!(Checkpoint::load(&path)
            .unwrap_err()
            .to_string()
            .contains("version 99"));
    }
}
