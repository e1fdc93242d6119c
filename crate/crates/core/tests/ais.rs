use mvcluster::ais::probe::{self, Target};
use mvcluster::ais::{
    assign_all, collect_inconsistent, resolve_labels, AisConfig, AisModel, Difficulty,
    DifficultyAssignment, ViewLabels,
};
use mvcluster::data::{partition_view, Region};
use mvcluster::numeric::{seeded_rng, AdamConfig, Matrix, MlpParams};
use rand::Rng;

fn random_views(n: usize, dims: &[usize], seed: u64) -> Vec<Matrix> {
    let mut rng = seeded_rng(seed, 50);
    dims.iter()
        .map(|&d| {
            Matrix::from_vec(
                n,
                d,
                (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap()
        })
        .collect()
}

fn small_config() -> AisConfig {
    AisConfig {
        hidden_width: 8,
        embed_width: 4,
        batch_size: 8,
        epochs: 3,
        ..AisConfig::default()
    }
}

fn labels_from(views: &[Matrix], anchor: usize, k: usize) -> DifficultyAssignment {
    let partitions: Vec<_> = views
        .iter()
        .enumerate()
        .map(|(v, m)| partition_view(m, v, anchor, k).unwrap())
        .collect();
    assign_all(&partitions, AisConfig::default().mu).unwrap()
}

#[test]
fn resolution_removes_every_disagreement() {
    for (seed, dims) in [(1, vec![3, 5]), (2, vec![2, 4, 3]), (3, vec![6, 2, 2, 3])] {
        let views = random_views(30, &dims, seed);
        let raw = labels_from(&views, 0, 12);
        assert!(!collect_inconsistent(&raw.views).is_empty());
        let mut model = AisModel::new(
            small_config(),
            &dims,
            AdamConfig::default(),
            &mut seeded_rng(seed, 1),
        );
        model.train(&views, &raw, &mut seeded_rng(seed, 2)).unwrap();
        let resolved = resolve_labels(&model, &views, &raw).unwrap();
        assert!(collect_inconsistent(&resolved.views).is_empty());
        // Samples every view already agreed on keep their labels.
        for k in 0..30 {
            let agreed = raw
                .views
                .iter()
                .all(|v| v.labels[k] == raw.views[0].labels[k]);
            if agreed {
                assert_eq!(resolved.label(0, k), raw.label(0, k));
            }
        }
    }
}

#[test]
fn consistent_labels_pass_through() {
    let views = random_views(10, &[2, 2], 4);
    let labels = ViewLabels {
        view_index: 0,
        labels: vec![Difficulty::Easy; 10],
        regions: vec![Some(Region::Positive); 10],
    };
    let mut other = labels.clone();
    other.view_index = 1;
    let assignment = DifficultyAssignment {
        mu: 0.5,
        views: vec![labels, other],
    };
    let mut model = AisModel::new(
        small_config(),
        &[2, 2],
        AdamConfig::default(),
        &mut seeded_rng(0, 0),
    );
    assert_eq!(
        resolve_labels(&model, &views, &assignment).unwrap(),
        assignment
    );
    let stats = model
        .minimax_epoch(&views, &assignment, &mut seeded_rng(0, 1))
        .unwrap();
    assert_eq!(stats.batches, 0);
}

#[test]
fn zero_learning_rate_epoch_changes_nothing() {
    let views = random_views(24, &[3, 4], 5);
    let raw = labels_from(&views, 3, 10);
    let adam = AdamConfig {
        learning_rate: 0.0,
        ..AdamConfig::default()
    };
    let initial = AisModel::new(small_config(), &[3, 4], adam, &mut seeded_rng(5, 0));
    let mut model = initial.clone();
    model
        .minimax_epoch(&views, &raw, &mut seeded_rng(5, 1))
        .unwrap();
    for t in [
        Target::Trunk,
        Target::Classifier,
        Target::ViewHead(0),
        Target::ViewHead(1),
        Target::FusedHead(0),
    ] {
        assert_eq!(probe::params(&model, t), probe::params(&initial, t));
    }
}

fn objective_after(
    model: &AisModel,
    target: Target,
    step: &MlpParams,
    views: &[Matrix],
    a: &DifficultyAssignment,
) -> f64 {
    let mut m = model.clone();
    probe::params_mut(&mut m, target).add_scaled(step, 1.0);
    probe::objective(&m, views, a).unwrap().0
}

#[test]
fn classifier_ascends_and_embedder_descends_to_first_order() {
    let views = random_views(24, &[3, 4], 6);
    let raw = labels_from(&views, 1, 10);
    let model = AisModel::new(
        small_config(),
        &[3, 4],
        AdamConfig::default(),
        &mut seeded_rng(6, 0),
    );
    let (j, _, _, grads) = probe::objective(&model, &views, &raw).unwrap();
    let eps = 1e-5;
    let g = probe::gradient(&grads, Target::Classifier).unwrap();
    assert!(objective_after(&model, Target::Classifier, &g.scaled(eps), &views, &raw) > j);
    for t in [
        Target::Trunk,
        Target::ViewHead(0),
        Target::ViewHead(1),
        Target::FusedHead(0),
    ] {
        let g = probe::gradient(&grads, t).unwrap();
        assert!(
            objective_after(&model, t, &g.scaled(-eps), &views, &raw) < j,
            "{t:?}"
        );
    }
}

#[test]
fn embeddings_share_one_width() {
    let views = random_views(5, &[3, 7], 7);
    let model = AisModel::new(
        small_config(),
        &[3, 7],
        AdamConfig::default(),
        &mut seeded_rng(7, 0),
    );
    let fused = views[0].hstack(&views[1]).unwrap();
    assert_eq!(model.embed_view(0, &views[0]).unwrap().shape(), (5, 4));
    assert_eq!(model.embed_view(1, &views[1]).unwrap().shape(), (5, 4));
    assert_eq!(model.embed_fused(0, 1, &fused).unwrap().shape(), (5, 4));
    let p = model
        .classify(&model.embed_fused(0, 1, &fused).unwrap())
        .unwrap();
    assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    let raw = labels_from(&views, 0, 2);
    let rate = model.fused_closer_rate(&views, &raw).unwrap();
    assert!((0.0..=1.0).contains(&rate));
}
