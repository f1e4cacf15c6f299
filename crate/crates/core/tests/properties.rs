use memrlab::bounds::{memr_ub_chain, memr_ub_split, mer_ub, BoundInput, Provenance};
use memrlab::exact::{ExactOptions, LogisticExact, Quantity};
use memrlab::model::DiscreteLogisticModel;
use memrlab::numerics::{compensated_sum, log_sum_exp};
use proptest::prelude::*;

fn input(q: Quantity, v: f64) -> BoundInput<f64> {
    BoundInput {
        quantity: q,
        value: v,
        provenance: Provenance::Exact,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_bound_is_non_negative_and_non_increasing_in_n(
        hyper in 0.0f64..5.0, param in 0.0f64..5.0, n in 1usize..64, m in 1usize..16,
    ) {
        let a = memr_ub_split(input(Quantity::MiHyperMeta, hyper), input(Quantity::MiParamGivenHyper, param), n, m).unwrap();
        let b = memr_ub_split(input(Quantity::MiHyperMeta, hyper), input(Quantity::MiParamGivenHyper, param), n + 1, m).unwrap();
        prop_assert!(a.value >= 0.0);
        prop_assert!(b.value <= a.value + 1e-15);
        let c = memr_ub_chain(input(Quantity::MiParamGivenMetadata, hyper), n, m).unwrap();
        prop_assert!((c.value * m as f64 - hyper).abs() < 1e-12);
        prop_assert!(mer_ub(input(Quantity::MiParamData, param), m).unwrap().value >= 0.0);
    }

    #[test]
    fn negative_or_non_finite_mi_is_rejected(v in -5.0f64..-1e-9) {
        prop_assert!(mer_ub(input(Quantity::MiParamData, v), 2).is_err());
        prop_assert!(mer_ub(input(Quantity::MiParamData, f64::NAN), 2).is_err());
    }

    #[test]
    fn log_sum_exp_is_shift_invariant(xs in prop::collection::vec(-50.0f64..50.0, 1..20), c in -100.0f64..100.0) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        prop_assert!((log_sum_exp(&shifted) - log_sum_exp(&xs) - c).abs() < 1e-9);
        let direct = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        prop_assert!((log_sum_exp(&xs) - direct).abs() < 1e-9);
    }

    #[test]
    fn compensated_sum_is_order_independent(mut xs in prop::collection::vec(-1e6f64..1e6, 1..200)) {
        let a = compensated_sum(xs.iter().copied());
        xs.reverse();
        let b = compensated_sum(xs.iter().copied());
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// The sandwich, the identity and the monotonicity hold for any slope and
    /// offset, not just the defaults.
    #[test]
    fn logistic_invariants_hold_for_random_models(slope in 0.1f64..8.0, offset in -1.0f64..1.0) {
        let model = DiscreteLogisticModel { slope, offset, ..DiscreteLogisticModel::default() };
        let exact = LogisticExact::new(&model, &ExactOptions::default()).unwrap();
        let m = 2;
        let mut previous = f64::INFINITY;
        for n in [1usize, 2, 4] {
            let r = exact.all(n, m).unwrap();
            let v = |q| r.iter().find(|x| x.quantity == q).unwrap().value;
            let (nf, mf) = (n as f64, m as f64);
            let memr = v(Quantity::Memr);
            let chain = v(Quantity::MiParamGivenMetadata) / mf;
            let split = v(Quantity::MiHyperMeta) / (nf * mf) + v(Quantity::MiParamGivenHyper) / mf;
            prop_assert!(memr >= -1e-9 && chain >= memr - 1e-9 && split >= chain - 1e-9);
            prop_assert!((v(Quantity::Mer) - memr - v(Quantity::MetaGain)).abs() < 1e-10);
            prop_assert!(memr <= previous + 1e-9);
            previous = memr;
        }
    }
}
