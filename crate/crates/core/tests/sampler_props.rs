use fastcoreset::samplers::{build_coreset, SamplerKind, SamplerSpec, WeightMode};
use fastcoreset::{PointSet, Power};
use proptest::prelude::*;

fn kind_strategy() -> impl Strategy<Value = SamplerKind> {
    prop_oneof![
        Just(SamplerKind::Lightweight),
        (1usize..=3).prop_map(|j| SamplerKind::Welterweight { j: Some(j) }),
        Just(SamplerKind::Sensitivity),
        Just(SamplerKind::FastCoreset),
    ]
}

fn data_strategy() -> impl Strategy<Value = PointSet> {
    (1usize..=3, 20usize..200).prop_flat_map(|(d, n)| {
        proptest::collection::vec(-50.0f64..50.0, n * d).prop_map(move |v| PointSet::new(d, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normalized_weights_sum_to_inflated_size(
        data in data_strategy(),
        kind in kind_strategy(),
        power in prop_oneof![Just(Power::KMedian), Just(Power::KMeans)],
        m in 10usize..80,
        seed in any::<u64>(),
    ) {
        let spec = SamplerSpec::new(kind, m, seed);
        let out = build_coreset(&data, 3, power, &spec).unwrap();
        let w = out.coreset.weights();
        prop_assert!(w.iter().all(|&x| x > 0.0 && x.is_finite()));
        prop_assert!(out.coreset.len() <= m);
        if out.report.unrepresented_clusters.is_empty() {
            let total: f64 = w.iter().sum();
            let target = (1.0 + spec.epsilon) * data.n() as f64;
            prop_assert!((total / target - 1.0).abs() < 1e-9, "total {} target {}", total, target);
        }
    }

    #[test]
    fn same_spec_same_coreset(data in data_strategy(), kind in kind_strategy(), seed in any::<u64>()) {
        for mode in [WeightMode::Normalized, WeightMode::PaperLiteral] {
            let mut spec = SamplerSpec::new(kind, 30, seed);
            spec.weight_mode = mode;
            let a = build_coreset(&data, 3, Power::KMeans, &spec).unwrap().coreset;
            let b = build_coreset(&data, 3, Power::KMeans, &spec).unwrap().coreset;
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn uniform_weights_are_equal(data in data_strategy(), m in 5usize..40, seed in any::<u64>()) {
        prop_assume!(m < data.n());
        let out = build_coreset(&data, 2, Power::KMeans, &SamplerSpec::new(SamplerKind::Uniform, m, seed)).unwrap();
        let w = out.coreset.weights();
        prop_assert_eq!(w.len(), m);
        let expect = data.n() as f64 / m as f64;
        prop_assert!(w.iter().all(|&x| (x - expect).abs() <= 1e-12 * expect));
    }
}
