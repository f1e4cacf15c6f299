use memrlab::cmine::{
    build_mi_dataset, estimate_bound_terms, estimate_mi_from, gaussian_pair_dataset, mlp_train,
    write_training_curve, CmineConfig, MiDataset, MiTarget, TrainConfig,
};
use memrlab::exact::{ExactOptions, LogisticExact, Quantity};
use memrlab::model::DiscreteLogisticModel;
use memrlab::rng::stream;

const RHO_MI: f64 = 0.510_825_623_765_990_7;

#[test]
fn gaussian_pair_calibration() {
    let config = CmineConfig::default();
    let truth = -0.5f64 * (1.0 - 0.64f64).ln();
    assert!((truth - RHO_MI).abs() < 1e-12);
    let est = estimate_mi_from(&gaussian_pair_dataset(0.8, 20_000, 11).unwrap(), &config, 11, &[]).unwrap();
    assert!((est.value - truth).abs() <= 0.1, "{est:?}");
    let est = estimate_mi_from(&gaussian_pair_dataset(0.0, 20_000, 12).unwrap(), &config, 12, &[]).unwrap();
    assert!(est.value.abs() <= 0.05, "{est:?}");
    assert!(est.diagnostics.ratio_clip_fraction < 1e-3);
}

/// Weight decay biases the fitted log-ratio towards zero by a fixed amount,
/// so the trend is checked on the unregularized estimator.
#[test]
fn error_shrinks_with_more_samples() {
    let config = CmineConfig {
        train: TrainConfig {
            l2: 0.0,
            ..TrainConfig::default()
        },
        ..CmineConfig::default()
    };
    let mean_abs_error = |n: usize| {
        (0..5u64)
            .map(|s| {
                let d = gaussian_pair_dataset(0.8, n, 100 + s).unwrap();
                (estimate_mi_from(&d, &config, 100 + s, &[]).unwrap().value - RHO_MI).abs()
            })
            .sum::<f64>()
            / 5.0
    };
    let (small, large) = (mean_abs_error(5_000), mean_abs_error(40_000));
    assert!(large <= small, "5k: {small}, 40k: {large}");
}

fn swap_tasks(data: &MiDataset, hyper_width: usize, block: usize) -> MiDataset {
    let swap = |row: &Vec<f64>| {
        let mut r = row.clone();
        let (a, b) = (hyper_width, hyper_width + block);
        for i in 0..block {
            r.swap(a + i, b + i);
        }
        r
    };
    MiDataset {
        joint: data.joint.iter().map(swap).collect(),
        product: data.product.iter().map(swap).collect(),
    }
}

#[test]
fn task_order_does_not_matter() {
    let model = DiscreteLogisticModel::default();
    let config = CmineConfig {
        n_samples: 10_000,
        ..CmineConfig::default()
    };
    let data = build_mi_dataset(&model, MiTarget::HyperMeta, 2, 2, config.n_samples, 4096, 3).unwrap();
    let swapped = swap_tasks(&data, 2, 4);
    assert_ne!(data, swapped);
    let a = estimate_mi_from(&data, &config, 3, &[]).unwrap();
    let b = estimate_mi_from(&swapped, &config, 3, &[]).unwrap();
    assert!((a.value - b.value).abs() <= 3.0 * a.std_error.hypot(b.std_error), "{a:?} vs {b:?}");
}

#[test]
fn logistic_bound_tracks_the_exact_bound() {
    let model = DiscreteLogisticModel::default();
    let exact = LogisticExact::new(&model, &ExactOptions::default()).unwrap();
    let config = CmineConfig::default();
    for n in [1, 2, 4, 8] {
        let terms = estimate_bound_terms(&model, n, 2, &config, 21).unwrap();
        let r = exact.all(n, 2).unwrap();
        let v = |q| r.iter().find(|x| x.quantity == q).unwrap().value;
        let want = v(Quantity::MiHyperMeta) / (2.0 * n as f64) + v(Quantity::MiParamGivenHyper) / 2.0;
        assert!((terms.bound.value - want).abs() <= 0.2, "N={n}: {} vs {want}", terms.bound.value);
        assert_eq!(terms.bound.provenance_label(), "bound:cmine");
    }
}

#[test]
fn training_curve_is_written_as_csv() {
    let data = gaussian_pair_dataset(0.5, 400, 1).unwrap().labeled();
    let config = TrainConfig {
        epochs: 50,
        log_every: 10,
        ..TrainConfig::default()
    };
    let (_, curve) = mlp_train(&data, &[8], &config, &mut stream(1, &[])).unwrap();
    let mut out = Vec::new();
    write_training_curve(&curve, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epoch,loss,accuracy");
    assert_eq!(lines.len(), 1 + 6);
    assert!(lines[6].starts_with("49,"));
}
