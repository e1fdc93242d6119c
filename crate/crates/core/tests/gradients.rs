//! Finite-difference checks of the hand-written gradients.

use mvcluster::ais::probe::{self, Target};
use mvcluster::ais::{AisConfig, AisModel, Difficulty, DifficultyAssignment, ViewLabels};
use mvcluster::data::Region;
use mvcluster::mvnet::{
    ae_loss_closed, ae_loss_open, discriminator_objective, generator_objective, NetworkConfig,
    ViewNets,
};
use mvcluster::numeric::gradcheck::{numeric_gradient, FD_STEP};
use mvcluster::numeric::{seeded_rng, AdamConfig, Matrix, MlpParams};
use rand::Rng;

const TOL: f64 = 1e-5;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = seeded_rng(seed, 99);
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap()
}

/// Passes when every entry agrees relatively or, for near-zero entries, absolutely.
fn assert_close(what: &str, analytic: &MlpParams, numeric: &MlpParams) {
    for (b, (a, n)) in analytic.blocks().iter().zip(numeric.blocks()).enumerate() {
        for (k, (&a, &n)) in a.iter().zip(n.iter()).enumerate() {
            let diff = (a - n).abs();
            let rel = diff / a.abs().max(n.abs()).max(1e-12);
            assert!(
                rel < TOL || diff < 1e-8,
                "{what}: {} entry {k}: analytic {a}, numeric {n}",
                MlpParams::block_name(b)
            );
        }
    }
}

fn small_nets(d: usize, seed: u64) -> ViewNets {
    let config = NetworkConfig {
        encoder_hidden: vec![6, 4],
        latent_width: 3,
        discriminator_hidden: vec![5, 4],
        ..NetworkConfig::default()
    };
    ViewNets::new(&config, d, AdamConfig::default(), &mut seeded_rng(seed, 0)).unwrap()
}

#[test]
fn closed_autoencoder_gradients() {
    let nets = small_nets(4, 1);
    let x = random_matrix(7, 4, 2);
    let eval = ae_loss_closed(&nets, &x).unwrap();
    let num_enc = numeric_gradient(&nets.encoder.params, FD_STEP, |p| {
        let mut n = nets.clone();
        n.encoder.params = p.clone();
        ae_loss_closed(&n, &x).unwrap().loss
    });
    assert_close("encoder", &eval.encoder, &num_enc);
    let num_gen = numeric_gradient(&nets.generator.params, FD_STEP, |p| {
        let mut n = nets.clone();
        n.generator.params = p.clone();
        ae_loss_closed(&n, &x).unwrap().loss
    });
    assert_close("generator", &eval.generator, &num_gen);
}

#[test]
fn open_autoencoder_gradients_with_fixed_common_subspace() {
    let nets = small_nets(5, 3);
    let x = random_matrix(6, 5, 4);
    let z = random_matrix(6, 3, 5);
    let eval = ae_loss_open(&nets, &x, &z, 0.5).unwrap();
    let num_enc = numeric_gradient(&nets.encoder.params, FD_STEP, |p| {
        let mut n = nets.clone();
        n.encoder.params = p.clone();
        ae_loss_open(&n, &x, &z, 0.5).unwrap().loss
    });
    assert_close("encoder", &eval.encoder, &num_enc);
    let num_gen = numeric_gradient(&nets.generator.params, FD_STEP, |p| {
        let mut n = nets.clone();
        n.generator.params = p.clone();
        ae_loss_open(&n, &x, &z, 0.5).unwrap().loss
    });
    assert_close("generator", &eval.generator, &num_gen);
}

#[test]
fn adversarial_gradients() {
    let nets = small_nets(4, 6);
    let real = random_matrix(5, 4, 7);
    let fake = random_matrix(8, 4, 8);
    let d = discriminator_objective(&nets.discriminator, &real, &fake).unwrap();
    let num = numeric_gradient(&nets.discriminator.params, FD_STEP, |p| {
        let mut disc = nets.discriminator.clone();
        disc.params = p.clone();
        discriminator_objective(&disc, &real, &fake)
            .unwrap()
            .objective
    });
    assert_close("discriminator", &d.grad, &num);

    let z = random_matrix(5, 3, 9);
    let g = generator_objective(&nets.generator, &nets.discriminator, &z).unwrap();
    let num = numeric_gradient(&nets.generator.params, FD_STEP, |p| {
        let mut gen = nets.generator.clone();
        gen.params = p.clone();
        generator_objective(&gen, &nets.discriminator, &z)
            .unwrap()
            .objective
    });
    assert_close("generator", &g.grad, &num);
}

fn view_labels(view_index: usize, pattern: &[u8]) -> ViewLabels {
    ViewLabels {
        view_index,
        labels: pattern
            .iter()
            .map(|&b| {
                if b == 1 {
                    Difficulty::Difficult
                } else {
                    Difficulty::Easy
                }
            })
            .collect(),
        regions: pattern.iter().map(|_| Some(Region::Negative)).collect(),
    }
}

#[test]
fn ais_objective_gradients() {
    let config = AisConfig {
        hidden_width: 6,
        embed_width: 4,
        ..AisConfig::default()
    };
    let dims = [3, 4, 2];
    let model = AisModel::new(
        config.clone(),
        &dims,
        AdamConfig::default(),
        &mut seeded_rng(10, 0),
    );
    let views: Vec<Matrix> = dims
        .iter()
        .enumerate()
        .map(|(i, &d)| random_matrix(6, d, 20 + i as u64))
        .collect();
    // Pairs (0,1) and (1,2) and (0,2) all have inconsistent samples.
    let assignment = DifficultyAssignment {
        mu: config.mu,
        views: vec![
            view_labels(0, &[1, 0, 1, 0, 0, 1]),
            view_labels(1, &[0, 1, 1, 0, 1, 1]),
            view_labels(2, &[0, 0, 1, 1, 0, 1]),
        ],
    };
    let (_, _, _, grads) = probe::objective(&model, &views, &assignment).unwrap();
    let mut targets = vec![Target::Trunk, Target::Classifier];
    targets.extend((0..3).map(Target::ViewHead));
    targets.extend((0..3).map(Target::FusedHead));
    let mut checked = 0;
    for target in targets {
        let Some(analytic) = probe::gradient(&grads, target) else {
            continue;
        };
        let num = numeric_gradient(probe::params(&model, target), FD_STEP, |p| {
            let mut m = model.clone();
            *probe::params_mut(&mut m, target) = p.clone();
            probe::objective(&m, &views, &assignment).unwrap().0
        });
        assert_close(&format!("{target:?}"), analytic, &num);
        checked += 1;
    }
    assert_eq!(checked, 8);
}
