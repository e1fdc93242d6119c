//! Multi-view autoencoder/GAN that learns the common subspace.
//!
//! Each view owns an encoder `E_i: d_i → p`, a mirrored generator
//! `G_i: p → d_i` and a three-layer discriminator `D_i: d_i → (0, 1)`.
//! A gate switches training from per-view reconstruction (closed) to
//! common-subspace training (open) once the selected sample count passes the
//! golden section of the dataset.

mod checkpoint;
mod losses;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use losses::{
    adv_losses, ae_loss_closed, ae_loss_open, discriminator_objective, generator_objective,
    AdvEval, AeEval, DiscEval, GenEval,
};
pub use train::{
    train, write_training_log, EpochLog, GateMode, TrainConfig, TrainOutcome, TRAINING_LOG_HEADER,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numeric::{Activation, AdamConfig, AdamState, Matrix, Mlp, MlpSpec, NumericError};

/// `(√5 − 1) / 2`.
pub const GOLDEN_SECTION: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, thiserror::Error)]
pub enum MvnetError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("non-finite loss at epoch {epoch}, batch {batch} (view {view})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        view: usize,
    },
    #[error("dataset has {found} views, model was built for {expected}")]
    ViewCount { expected: usize, found: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateState {
    pub open: bool,
    pub selected_count: usize,
    pub total_count: usize,
}

/// Opens iff `selected_count > sigma · total`.
pub fn gate(selected_count: usize, total: usize, sigma: f64) -> GateState {
    GateState {
        open: selected_count as f64 > sigma * total as f64,
        selected_count,
        total_count: total,
    }
}

/// Element-wise mean of the per-view latent matrices.
pub fn fuse_subspace(per_view: &[Matrix]) -> Result<Matrix, MvnetError> {
    let first = per_view
        .first()
        .ok_or_else(|| NumericError::ShapeMismatch {
            context: "fuse_subspace".into(),
            expected: "at least one view".into(),
            found: "none".into(),
        })?;
    let mut sum = first.clone();
    for z in &per_view[1..] {
        sum.add_assign(z)?;
    }
    Ok(sum.scale(1.0 / per_view.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Encoder hidden widths; the generator mirrors them.
    pub encoder_hidden: Vec<usize>,
    pub latent_width: usize,
    pub discriminator_hidden: Vec<usize>,
    pub hidden_activation: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            encoder_hidden: vec![128, 64],
            latent_width: 10,
            discriminator_hidden: vec![64, 32],
            hidden_activation: Activation::Tanh,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.latent_width == 0 {
            return Err("latent_width must be >= 1".into());
        }
        if self.encoder_hidden.contains(&0) || self.discriminator_hidden.contains(&0) {
            return Err("hidden widths must be >= 1".into());
        }
        if self.discriminator_hidden.len() != 2 {
            return Err(format!(
                "the discriminator has three layers, so discriminator_hidden needs 2 widths, got {}",
                self.discriminator_hidden.len()
            ));
        }
        Ok(())
    }

    pub fn encoder_spec(&self, input_width: usize) -> Result<MlpSpec, NumericError> {
        let mut widths = vec![input_width];
        widths.extend(&self.encoder_hidden);
        widths.push(self.latent_width);
        MlpSpec::uniform(widths, self.hidden_activation, Activation::Identity)
    }

    pub fn generator_spec(&self, output_width: usize) -> Result<MlpSpec, NumericError> {
        let mut widths = vec![self.latent_width];
        widths.extend(self.encoder_hidden.iter().rev());
        widths.push(output_width);
        MlpSpec::uniform(widths, self.hidden_activation, Activation::Identity)
    }

    pub fn discriminator_spec(&self, input_width: usize) -> Result<MlpSpec, NumericError> {
        let mut widths = vec![input_width];
        widths.extend(&self.discriminator_hidden);
        widths.push(1);
        MlpSpec::uniform(widths, self.hidden_activation, Activation::Sigmoid)
    }
}

/// Networks and optimizer state of one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewNets {
    pub encoder: Mlp,
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub encoder_opt: AdamState,
    pub generator_opt: AdamState,
    pub discriminator_opt: AdamState,
}

impl ViewNets {
    pub fn new<R: Rng + ?Sized>(
        config: &NetworkConfig,
        input_width: usize,
        adam: AdamConfig,
        rng: &mut R,
    ) -> Result<Self, NumericError> {
        let encoder = Mlp::new(config.encoder_spec(input_width)?, rng);
        let generator = Mlp::new(config.generator_spec(input_width)?, rng);
        let discriminator = Mlp::new(config.discriminator_spec(input_width)?, rng);
        Ok(Self {
            encoder_opt: AdamState::new(adam, &encoder.params),
            generator_opt: AdamState::new(adam, &generator.params),
            discriminator_opt: AdamState::new(adam, &discriminator.params),
            encoder,
            generator,
            discriminator,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiViewModel {
    pub config: NetworkConfig,
    pub views: Vec<ViewNets>,
}

impl MultiViewModel {
    pub fn new<R: Rng + ?Sized>(
        config: NetworkConfig,
        view_dims: &[usize],
        adam: AdamConfig,
        rng: &mut R,
    ) -> Result<Self, NumericError> {
        let views = view_dims
            .iter()
            .map(|&d| ViewNets::new(&config, d, adam, rng))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { config, views })
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn latent_width(&self) -> usize {
        self.config.latent_width
    }

    /// View weight `λ_i = 1/V` of the open-state loss.
    pub fn view_weight(&self) -> f64 {
        1.0 / self.views.len() as f64
    }

    /// Encodes every row of every view.
    pub fn encode_all(&self, views: &[Matrix]) -> Result<Vec<Matrix>, MvnetError> {
        if views.len() != self.views.len() {
            return Err(MvnetError::ViewCount {
                expected: self.views.len(),
                found: views.len(),
            });
        }
        self.views
            .iter()
            .zip(views)
            .map(|(nets, x)| Ok(nets.encoder.predict(x)?))
            .collect()
    }

    /// Common subspace for all samples: the mean of the per-view encodings.
    pub fn common_subspace(&self, views: &[Matrix]) -> Result<CommonSubspace, MvnetError> {
        let per_view = self.encode_all(views)?;
        let z = fuse_subspace(&per_view)?;
        Ok(CommonSubspace { z, per_view })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommonSubspace {
    /// `n × p` fused representation.
    pub z: Matrix,
    pub per_view: Vec<Matrix>,
}
