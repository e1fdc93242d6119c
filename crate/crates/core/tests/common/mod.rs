#![allow(dead_code)]

use mvcluster::data::MultiViewDataset;
use mvcluster::experiment::{generate_synthetic, ExperimentConfig, SynthSpec, Variant};

/// Desk-scale network and schedule used by the synthetic benchmarks.
pub fn bench_config(seed: u64, variant: Variant) -> ExperimentConfig {
    let mut c = ExperimentConfig::new("unused.toml");
    c.seed = seed;
    c.variant = variant;
    c.network.encoder_hidden = vec![64, 32];
    c.network.latent_width = 8;
    c.network.discriminator_hidden = vec![32, 16];
    c.adam.learning_rate = 1e-3;
    c.training.epochs = 150;
    c.ais.epochs = 50;
    c
}

/// Small and fast: for plumbing tests, not for accuracy.
pub fn tiny_config(seed: u64, variant: Variant) -> ExperimentConfig {
    let mut c = ExperimentConfig::new("unused.toml");
    c.seed = seed;
    c.variant = variant;
    c.network.encoder_hidden = vec![12, 8];
    c.network.latent_width = 3;
    c.network.discriminator_hidden = vec![8, 4];
    c.adam.learning_rate = 1e-3;
    c.training.epochs = 20;
    c.training.batch_size = 16;
    c.ais.epochs = 5;
    c.ais.hidden_width = 8;
    c.ais.embed_width = 4;
    c.kmeans.restarts = 5;
    c
}

pub fn blobs(seed: u64, noise: f64, samples: usize) -> MultiViewDataset {
    let spec = SynthSpec {
        samples,
        noise,
        seed,
        ..SynthSpec::default()
    };
    generate_synthetic(&spec)
        .unwrap()
        .normalized(&[Default::default(); 2])
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}
