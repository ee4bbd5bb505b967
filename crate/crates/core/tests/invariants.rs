//! Property tests for the numeric and protocol invariants.

use proptest::prelude::*;

use mtada_core::losses::{dom_loss_allway, dom_loss_binary, dom_loss_decomposed};
use mtada_core::numerics::{matvec, softmax, Matrix, Vector};
use mtada_core::sampler::{gradient_utility, gu_weights};

fn vec_strategy(len: usize, mag: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-mag..mag, len)
}

proptest! {
    #[test]
    fn softmax_sums_to_one(logits in prop::collection::vec(-1e3..1e3f64, 1..12)) {
        let p = softmax(&Vector::from_vec(logits));
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x > 0.0 || x == 0.0));
        prop_assert!(p.all_finite());
    }

    #[test]
    fn matvec_distributes_over_addition(
        data in vec_strategy(12, 10.0),
        x in vec_strategy(4, 10.0),
        y in vec_strategy(4, 10.0),
    ) {
        let mut w = Matrix::zeros(3, 4);
        w.as_mut_slice().copy_from_slice(&data);
        let x = Vector::from_vec(x);
        let y = Vector::from_vec(y);
        let mut xy = x.clone();
        xy.axpy(1.0, &y);

        let lhs = matvec(&w, &xy);
        let mut rhs = matvec(&w, &x);
        rhs.axpy(1.0, &matvec(&w, &y));
        for i in 0..3 {
            prop_assert!((lhs[i] - rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn decomposition_identity_exact(
        logits in vec_strategy(5, 6.0),   // N = 3 targets
        m in 0usize..4,
        alpha in 0.0..3.0f64,
    ) {
        let full = Vector::from_vec(logits.clone());
        let dec = dom_loss_decomposed(&full, m, alpha);
        let bin = dom_loss_binary(&Vector::from_vec(vec![logits[0], logits[1]]), m);
        let mut aw_data = vec![logits[0]];
        aw_data.extend_from_slice(&logits[2..]);
        let aw = dom_loss_allway(&Vector::from_vec(aw_data), m);
        // Same floating-point summation order as the implementation.
        prop_assert_eq!(dec.value, bin.value + alpha * aw.value);
    }

    #[test]
    fn softmax_ce_gradient_identity(
        logits in vec_strategy(6, 8.0),
        y in 0usize..6,
    ) {
        let v = Vector::from_vec(logits);
        let bundle = mtada_core::losses::cls_loss(&v, y);
        let p = softmax(&v);
        for k in 0..6 {
            let expected = p[k] - if k == y { 1.0 } else { 0.0 };
            prop_assert!((bundle.grad_logits[k] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn losses_shift_invariant(
        logits in vec_strategy(4, 5.0),
        m in 0usize..3,
        shift in -50.0..50.0f64,
    ) {
        let base = dom_loss_decomposed(&Vector::from_vec(logits.clone()), m, 0.7);
        let shifted: Vec<f64> = logits.iter().map(|&l| l + shift).collect();
        let s = dom_loss_decomposed(&Vector::from_vec(shifted), m, 0.7);
        prop_assert!((base.value - s.value).abs() < 1e-9);
    }

    #[test]
    fn gradient_utility_bound(
        g_cls in vec_strategy(6, 4.0),
        g_da in vec_strategy(6, 4.0),
    ) {
        let (phi_cls, corr, phi) = gradient_utility(
            &Vector::from_vec(g_cls),
            &Vector::from_vec(g_da),
        );
        prop_assert!((-1.0..=1.0).contains(&corr));
        prop_assert!(phi >= -1e-15);
        prop_assert!(phi <= 2.0 * phi_cls + 1e-12);
    }

    #[test]
    fn gu_weights_normalized(
        phis in prop::collection::vec(0.0..10.0f64, 1..40),
        beta in 0.0..8.0f64,
    ) {
        let w = gu_weights(&phis, beta);
        prop_assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!(w.iter().cloned().fold(0.0, f64::max) == 1.0);
    }

    #[test]
    fn gu_weights_scale_invariant(
        phis in prop::collection::vec(0.001..10.0f64, 2..30),
        beta in 0.0..6.0f64,
        c in 0.01..100.0f64,
    ) {
        let a = gu_weights(&phis, beta);
        let scaled: Vec<f64> = phis.iter().map(|&p| p * c).collect();
        let b = gu_weights(&scaled, beta);
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn float_csv_round_trip_exact(bits in prop::collection::vec(any::<u64>(), 1..20)) {
        // Shortest-round-trip printing must recover every finite f64 exactly.
        for b in bits {
            let x = f64::from_bits(b);
            if !x.is_finite() {
                continue;
            }
            let s = format!("{x}");
            let back: f64 = s.parse().unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn annotation_conservation(
        seed in 0u64..500,
        picks in prop::collection::vec(0usize..20, 0..8),
    ) {
        use mtada_core::dataset::{generate, DomainShiftSpec, GeneratorConfig};
        let cfg = GeneratorConfig {
            n_classes: 2,
            n_targets: 2,
            dim: 3,
            train_per_domain: 24,
            test_per_domain: 8,
            class_separation: 2.0,
            class_spread: 0.4,
            shifts: vec![
                DomainShiftSpec::identity(3),
                DomainShiftSpec::identity(3),
                DomainShiftSpec::identity(3),
            ],
        };
        let mut ds = generate(seed, &cfg).unwrap();
        let totals: Vec<usize> = (0..=2)
            .map(|d| ds.train.labeled_count(d) + ds.train.unlabeled_count(d))
            .collect();
        for (i, p) in picks.iter().enumerate() {
            let domain = 1 + (i % 2);
            let pool = ds.train.unlabeled_ids(domain);
            if pool.is_empty() {
                continue;
            }
            let id = pool[p % pool.len()];
            ds.train.annotate(domain, &[id]).unwrap();
            for d in 0..=2usize {
                prop_assert_eq!(
                    ds.train.labeled_count(d) + ds.train.unlabeled_count(d),
                    totals[d]
                );
            }
        }
    }
}
