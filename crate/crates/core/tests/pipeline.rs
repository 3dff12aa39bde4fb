use std::collections::HashSet;

use fastcoreset::datagen::{gen_gaussian_mixture, gen_hardness, MixtureParams};
use fastcoreset::io::{load_coreset, load_spread_map, save_coreset, save_spread_map, Format};
use fastcoreset::rng::rng_from_seed;
use fastcoreset::samplers::{build_coreset, SamplerKind, SamplerSpec};
use fastcoreset::spread::reduce_spread;
use fastcoreset::streaming::{stream_coreset, MergeTreePlan};
use fastcoreset::{ClusteringSolution, PointSet, Power};
use rand::Rng;

const KINDS: [SamplerKind; 5] = [
    SamplerKind::Uniform,
    SamplerKind::Lightweight,
    SamplerKind::Welterweight { j: None },
    SamplerKind::Sensitivity,
    SamplerKind::FastCoreset,
];

fn mixture(n: usize, kappa: usize, d: usize, seed: u64) -> PointSet {
    gen_gaussian_mixture(&MixtureParams { n, kappa, d, gamma: 1.0, ..Default::default() }, seed).unwrap().0
}

fn row_key(r: &[f64]) -> Vec<u64> {
    r.iter().map(|x| x.to_bits()).collect()
}

// plain loop, independent of the library's chunked reductions
fn brute_cost(points: &[&[f64]], weights: &[f64], centers: &[Vec<f64>], z: i32) -> f64 {
    points
        .iter()
        .zip(weights)
        .map(|(p, w)| {
            let best = centers
                .iter()
                .map(|c| p.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                .fold(f64::INFINITY, f64::min);
            w * best.powi(z)
        })
        .sum()
}

#[test]
fn coresets_are_weighted_input_rows_and_survive_both_formats() {
    let p = mixture(3000, 6, 4, 11);
    let rows: HashSet<Vec<u64>> = p.rows().map(row_key).collect();
    let dir = tempfile::tempdir().unwrap();
    for kind in KINDS {
        let out = build_coreset(&p, 6, Power::KMeans, &SamplerSpec::new(kind, 240, 3)).unwrap();
        let c = &out.coreset;
        assert!(c.points().rows().all(|r| rows.contains(&row_key(r))), "{kind}");
        assert!(c.weights().iter().all(|&w| w > 0.0 && w.is_finite()), "{kind}");
        for (fmt, name) in [(Format::Csv, "c.csv"), (Format::Binary, "c.bin")] {
            let path = dir.path().join(name);
            save_coreset(c, &path, fmt).unwrap();
            assert_eq!(&load_coreset(&path, fmt).unwrap(), c, "{kind} {name}");
        }
    }
}

#[test]
fn coreset_cost_tracks_full_cost_for_random_centers() {
    let p = mixture(20_000, 8, 3, 5);
    let data_rows: Vec<&[f64]> = p.rows().collect();
    let ones = vec![1.0; p.n()];
    let mut rng = rng_from_seed(77);
    for kind in [SamplerKind::Sensitivity, SamplerKind::FastCoreset] {
        for power in [Power::KMedian, Power::KMeans] {
            let out = build_coreset(&p, 8, power, &SamplerSpec::new(kind, 320, 1)).unwrap();
            let c_rows: Vec<&[f64]> = out.coreset.points().rows().collect();
            for _ in 0..20 {
                let centers: Vec<Vec<f64>> =
                    (0..8).map(|_| (0..3).map(|_| rng.random_range(0.0..100.0)).collect()).collect();
                let z = power.z() as i32;
                let full = brute_cost(&data_rows, &ones, &centers, z);
                let approx = brute_cost(&c_rows, out.coreset.weights(), &centers, z);
                assert!((approx / full - 1.0).abs() < 0.2, "{kind} z={z}: {approx} vs {full}");
                let lib = fastcoreset::cost(
                    &out.coreset,
                    &ClusteringSolution::new(PointSet::new(3, centers.concat()).unwrap(), power),
                )
                .unwrap();
                assert!((lib / approx - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn single_block_stream_is_the_batch_coreset() {
    let p = mixture(4000, 5, 3, 2);
    let spec = SamplerSpec::new(SamplerKind::FastCoreset, 200, 9);
    let batch = build_coreset(&p, 5, Power::KMeans, &spec).unwrap().coreset;
    let plan = MergeTreePlan { k: 5, power: Power::KMeans, sampler: spec };
    let streamed = stream_coreset([&p], &plan).unwrap();
    assert_eq!(streamed, batch);
}

#[test]
fn spread_map_file_round_trip() {
    let p = gen_hardness(2000, 1000, 12, 0.0, 4).unwrap();
    let red = reduce_spread(&p, 5, Power::KMeans, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("map.csr");
    save_spread_map(&red.map, &path).unwrap();
    assert_eq!(load_spread_map(&path).unwrap(), red.map);
}

#[test]
fn spread_reduction_does_not_change_quality_on_easy_data() {
    let p = mixture(5000, 5, 2, 8);
    for use_sr in [true, false] {
        let mut spec = SamplerSpec::new(SamplerKind::FastCoreset, 200, 4);
        spec.fast.use_spread_reduction = use_sr;
        let out = build_coreset(&p, 5, Power::KMeans, &spec).unwrap();
        let d = fastcoreset::distortion(&p, &out.coreset, 5, Power::KMeans, 1).unwrap();
        assert!(d < 1.3, "spread reduction {use_sr}: {d}");
    }
}
