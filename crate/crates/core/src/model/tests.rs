use super::*;
use approx::assert_abs_diff_eq;
use ndarray::arr1;
use rand::Rng;

fn tiny() -> (TrainConfig, TrainData) {
    let spatial = Graph::from_edges(
        12,
        &[
            (0, 1),
            (1, 2),
            (2, 0),
            (2, 3),
            (3, 4),
            (4, 5),
            (5, 6),
            (6, 7),
            (7, 8),
            (8, 6),
            (9, 10),
            (10, 11),
            (11, 9),
            (1, 9),
        ],
    )
    .unwrap();
    let od = Graph::from_edges(
        12,
        &[
            (0, 6),
            (1, 7),
            (2, 8),
            (3, 9),
            (4, 10),
            (5, 11),
            (0, 3),
            (6, 9),
        ],
    )
    .unwrap();
    let g = UrbanGraph::new(spatial, od).unwrap();
    let mut r = RngState::new(11).rng();
    let x = Array2::from_shape_fn((12, 6), |_| r.random_range(-1.0..1.0));
    let labels: Vec<usize> = (0..12).map(|i| i % 2).collect();
    let split = Split {
        train: (0..8).collect(),
        val: vec![8, 9],
        test: vec![10, 11],
    };
    let cfg = TrainConfig {
        d_in: 6,
        hidden_dim: 5,
        latent_dim: 4,
        gru_hidden: 3,
        n_proto: 2,
        walks: 3,
        walk_length: 4,
        ..TrainConfig::default()
    };
    let data = TrainData::new(&g, x, labels, split).unwrap();
    (cfg, data)
}

#[test]
fn similarity_examples() {
    let h = arr1(&[1.0, 2.0]);
    assert_abs_diff_eq!(
        similarity(h.view(), h.view(), 1e-4),
        (1e4f64).ln(),
        epsilon = 1e-12
    );
    let p = arr1(&[1.0, 3.0]);
    assert_abs_diff_eq!(
        similarity(h.view(), p.view(), 1e-4),
        (2.0f64 / 1.0001).ln(),
        epsilon = 1e-12
    );
    let far = arr1(&[1e6, 0.0]);
    assert!(similarity(h.view(), far.view(), 1e-4) < 1e-11);
}

#[test]
fn split_is_stratified_and_disjoint() {
    let labels: Vec<usize> = (0..100).map(|i| usize::from(i >= 37)).collect();
    let s = Split::stratified(&labels, 0.6, 0.2, RngState::new(1));
    assert_eq!(s.train.len() + s.val.len() + s.test.len(), 100);
    assert_eq!(s.train.iter().filter(|&&i| labels[i] == 0).count(), 22);
    let mut all: Vec<usize> = s
        .train
        .iter()
        .chain(&s.val)
        .chain(&s.test)
        .copied()
        .collect();
    all.sort_unstable();
    assert_eq!(all, (0..100).collect::<Vec<_>>());
}

#[test]
fn zero_weights_give_bias_rows() {
    let (cfg, data) = tiny();
    let mut m = PrototypeModel::init(&cfg, &data).unwrap();
    for l in m.encoder.layers.iter_mut().flatten() {
        l.fill(0.0);
    }
    m.encoder.fuse_b = arr1(&[0.5, -1.0, 2.0, 0.0]);
    let f = forward(&m, &data).unwrap();
    for row in f.latent.rows() {
        assert_eq!(row, m.encoder.fuse_b);
    }
}

#[test]
fn softmax_rows_sum_to_one() {
    let (cfg, data) = tiny();
    let m = PrototypeModel::init(&cfg, &data).unwrap();
    let f = forward(&m, &data).unwrap();
    for row in f.probs.rows() {
        assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let (cfg, data) = tiny();
    let mut model = PrototypeModel::init(&cfg, &data).unwrap();
    let bundles = training_bundles(&data, &cfg, RngState::new(4)).unwrap();
    let b = [bundles[0].as_slice(), bundles[1].as_slice()];
    let (_, mut grad) = loss_and_gradient(&model, &data, b).unwrap();
    let h = 1e-5;
    let names: Vec<String> = model.tensors_mut().into_iter().map(|(n, _)| n).collect();
    for (ti, name) in names.iter().enumerate() {
        let (rows, cols) = model.tensors_mut()[ti].1.dim();
        for idx in 0..(rows * cols).min(30) {
            let (i, j) = (idx * 7 % rows, idx * 13 % cols);
            let orig = model.tensors_mut()[ti].1[[i, j]];
            model.tensors_mut()[ti].1[[i, j]] = orig + h;
            let up = loss(&model, &data, b).unwrap().total;
            model.tensors_mut()[ti].1[[i, j]] = orig - h;
            let down = loss(&model, &data, b).unwrap().total;
            model.tensors_mut()[ti].1[[i, j]] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grad.tensors_mut()[ti].1[[i, j]];
            let err = (analytic - numeric).abs() / analytic.abs().max(1.0);
            assert!(
                err < 1e-4,
                "{name}[{i},{j}]: analytic {analytic} numeric {numeric}"
            );
        }
    }
}

#[test]
fn zero_lambdas_leave_cross_entropy() {
    let (cfg, data) = tiny();
    let cfg = TrainConfig {
        lambda1: 0.0,
        lambda2: 0.0,
        lambda3: 0.0,
        ..cfg
    };
    let model = PrototypeModel::init(&cfg, &data).unwrap();
    let bundles = training_bundles(&data, &cfg, RngState::new(4)).unwrap();
    let l = loss(&model, &data, [&bundles[0], &bundles[1]]).unwrap();
    let f = forward(&model, &data).unwrap();
    let ce = -data
        .split
        .train
        .iter()
        .map(|&i| f.probs[[i, data.labels[i]]].ln())
        .sum::<f64>()
        / data.split.train.len() as f64;
    assert_abs_diff_eq!(l.total, l.ce, epsilon = 0.0);
    assert_abs_diff_eq!(l.ce, ce, epsilon = 1e-12);
}

#[test]
fn projection_zeroes_encoding_loss() {
    let (cfg, data) = tiny();
    let mut model = PrototypeModel::init(&cfg, &data).unwrap();
    let bundles = training_bundles(&data, &cfg, RngState::new(2)).unwrap();
    let b = [bundles[0].as_slice(), bundles[1].as_slice()];
    assert!(loss(&model, &data, b).unwrap().enc > 0.0);
    let recs = project_with(&mut model, &data, &data.split.train, b).unwrap();
    assert_eq!(recs.len(), 2 * model.prototype_count());
    assert_eq!(loss(&model, &data, b).unwrap().enc, 0.0);
    for r in &recs {
        assert_eq!(data.labels[r.root], r.class);
        assert_eq!(r.bundle.root, r.root);
    }
}

#[test]
fn losses_have_expected_signs() {
    let (cfg, data) = tiny();
    let model = PrototypeModel::init(&cfg, &data).unwrap();
    let bundles = training_bundles(&data, &cfg, RngState::new(2)).unwrap();
    let l = loss(&model, &data, [&bundles[0], &bundles[1]]).unwrap();
    assert!(l.clst >= 0.0 && l.sprt <= 0.0 && l.enc >= 0.0 && l.ce > 0.0);
}

#[test]
fn zero_epochs_return_initialization() {
    let (cfg, data) = tiny();
    let cfg = TrainConfig {
        max_epochs: 0,
        ..cfg
    };
    let out = train(&cfg, &data).unwrap();
    assert_eq!(out.model, PrototypeModel::init(&cfg, &data).unwrap());
    assert!(out.log.is_empty());
}

#[test]
fn training_is_deterministic_and_serializes() {
    let (cfg, data) = tiny();
    let cfg = TrainConfig {
        max_epochs: 30,
        projection_interval: 10,
        lr: 0.01,
        ..cfg
    };
    let a = train(&cfg, &data).unwrap();
    let b = train(&cfg, &data).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.log, b.log);
    let back = PrototypeModel::from_json(&a.model.to_json().unwrap()).unwrap();
    assert_eq!(back, a.model);
}

#[test]
fn divergence_is_reported() {
    let (cfg, data) = tiny();
    let cfg = TrainConfig {
        max_epochs: 200,
        lr: 1e12,
        optimizer: Optimizer::Sgd,
        patience: 0,
        ..cfg
    };
    match train(&cfg, &data) {
        Err(Error::Divergence { .. }) => {}
        other => panic!("expected divergence, got {:?}", other.map(|o| o.epochs_run)),
    }
}

#[test]
fn config_rejects_bad_values() {
    assert!(TrainConfig {
        lr: 0.0,
        ..TrainConfig::default()
    }
    .validate()
    .is_err());
    assert!(TrainConfig {
        train_frac: 0.9,
        ..TrainConfig::default()
    }
    .validate()
    .is_err());
    let (cfg, data) = tiny();
    let wrong = TrainConfig { d_in: 7, ..cfg };
    assert!(PrototypeModel::init(&wrong, &data).is_err());
}
