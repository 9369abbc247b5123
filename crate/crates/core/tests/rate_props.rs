use fhefl_core::agg::{fedavg, non_poisoning_rates, weighted_aggregate_plain, Aggregator};
use proptest::prelude::*;

fn distances() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1e6, 2..40).prop_filter("positive total", |d| d.iter().sum::<f64>() > 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rates_sum_to_one_and_are_bounded(d in distances()) {
        let p = non_poisoning_rates(&d).unwrap();
        let u = d.len() as f64;
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for &r in &p {
            prop_assert!(r >= -1e-15 && r <= 1.0 / (u - 1.0) + 1e-15);
        }
    }

    #[test]
    fn rates_decrease_with_distance(d in distances()) {
        let p = non_poisoning_rates(&d).unwrap();
        for i in 0..d.len() {
            for j in 0..d.len() {
                if d[i] < d[j] {
                    prop_assert!(p[i] > p[j]);
                }
                if d[i] == d[j] {
                    prop_assert_eq!(p[i], p[j]);
                }
            }
        }
    }

    #[test]
    fn rates_ignore_power_of_two_scaling(d in distances(), e in -20i32..20) {
        let c = 2f64.powi(e);
        let scaled: Vec<f64> = d.iter().map(|x| x * c).collect();
        prop_assert_eq!(non_poisoning_rates(&d).unwrap(), non_poisoning_rates(&scaled).unwrap());
    }

    #[test]
    fn rates_nearly_ignore_any_scaling(d in distances(), c in 1e-3f64..1e3) {
        let scaled: Vec<f64> = d.iter().map(|x| x * c).collect();
        for (a, b) in non_poisoning_rates(&d).unwrap().iter().zip(non_poisoning_rates(&scaled).unwrap()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_distances_reduce_to_fedavg(
        u in 2usize..12,
        g in prop::collection::vec(-5.0f64..5.0, 6),
        d in 0.0f64..100.0,
    ) {
        let grads: Vec<Vec<f64>> = (0..u).map(|k| g.iter().map(|x| x * (k as f64 + 1.0)).collect()).collect();
        let refs: Vec<&[f64]> = grads.iter().map(|v| v.as_slice()).collect();
        let rates = non_poisoning_rates(&vec![d; u]).unwrap();
        prop_assert_eq!(rates.clone(), vec![1.0 / u as f64; u]);
        let w = vec![0.5; 6];
        let fhefl = weighted_aggregate_plain(&w, &refs, &rates, 0.1).unwrap();
        let avg = fedavg(&refs).unwrap();
        let expect: Vec<f64> = w.iter().zip(&avg).map(|(a, b)| a - 0.1 * b).collect();
        prop_assert_eq!(fhefl, expect);
    }

    #[test]
    fn identical_updates_are_fixed_points_of_every_rule(g in prop::collection::vec(-3.0f64..3.0, 1..8)) {
        let grads = vec![g.clone(); 6];
        let refs: Vec<&[f64]> = grads.iter().map(|v| v.as_slice()).collect();
        for name in ["fhefl", "fedavg", "median", "trimmed_mean", "krum"] {
            let out = Aggregator::from_name(name, 0.2, 1).unwrap().aggregate(&refs).unwrap();
            for (a, b) in out.direction.iter().zip(&g) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{}", name);
            }
        }
    }
}
