mod common;

use common::{adjusted_rand_index, covering_radius, exhaustive_k_center, greedy_coreset};
use glfm_core::bank::{build_coreset, build_model, coreset_target, decode_model, encode_model, kmeans, BuildOptions};
use glfm_core::features::FeatureSet;
use glfm_core::SeededRng;

fn flat(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().flatten().copied().collect()
}

#[test]
fn coreset_sequence_matches_greedy_oracle() {
    let mut rng = SeededRng::new(21);
    for case in 0..100 {
        let dim = 1 + case % 8;
        let rows: Vec<Vec<f64>> = (0..50).map(|_| (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect();
        let target = 1 + rng.below(50);
        assert_eq!(build_coreset(&flat(&rows), dim, target).unwrap(), greedy_coreset(&rows, target));
    }
}

#[test]
fn coreset_is_within_twice_the_optimum() {
    let mut rng = SeededRng::new(22);
    for case in 0..50 {
        let n = 3 + case % 10;
        let dim = 1 + case % 3;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.uniform(0.0, 1.0)).collect()).collect();
        let k = 1 + rng.below(n - 1);
        let greedy = covering_radius(&rows, &build_coreset(&flat(&rows), dim, k).unwrap());
        let opt = exhaustive_k_center(&rows, k);
        assert!(greedy <= 2.0 * opt + 1e-12, "case {case}: {greedy} > 2 * {opt}");
    }
}

#[test]
fn coreset_target_rounds_up() {
    assert_eq!(coreset_target(100, 0.1), 10);
    assert_eq!(coreset_target(101, 0.1), 11);
    assert_eq!(coreset_target(5, 0.01), 1);
    assert_eq!(coreset_target(5, 1.0), 5);
}

fn blobs(rng: &mut SeededRng) -> (Vec<Vec<f64>>, Vec<usize>) {
    // equilateral triangle with side 10
    let centers = [[0.0, 0.0], [10.0, 0.0], [5.0, 75f64.sqrt()]];
    let mut pts = Vec::new();
    let mut truth = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..40 {
            pts.push(vec![center[0] + 0.1 * rng.normal(), center[1] + 0.1 * rng.normal()]);
            truth.push(c);
        }
    }
    (pts, truth)
}

#[test]
fn kmeans_recovers_blobs_for_every_seed() {
    for seed in 0..20 {
        let mut rng = SeededRng::new(1000 + seed);
        let (pts, truth) = blobs(&mut rng);
        let res = kmeans(&pts, 3, 100, &mut SeededRng::new(seed)).unwrap();
        assert_eq!(adjusted_rand_index(&res.assignment, &truth), 1.0, "seed {seed}");
        assert!(res.converged);
    }
}

#[test]
fn kmeans_sse_never_increases() {
    for seed in 0..20 {
        let mut rng = SeededRng::new(seed);
        let pts: Vec<Vec<f64>> = (0..300).map(|_| (0..4).map(|_| rng.uniform(0.0, 1.0)).collect()).collect();
        let res = kmeans(&pts, 7, 100, &mut SeededRng::new(seed)).unwrap();
        for w in res.sse_trace.windows(2) {
            assert!(w[1] <= w[0], "seed {seed}: {:?}", res.sse_trace);
        }
    }
}

#[test]
fn kmeans_handles_duplicate_points() {
    let pts = vec![vec![1.0, 1.0]; 6];
    let res = kmeans(&pts, 3, 10, &mut SeededRng::new(3)).unwrap();
    let mut used = res.assignment.clone();
    used.sort_unstable();
    used.dedup();
    assert!(used.len() <= 3);
    assert!(kmeans(&pts, 7, 10, &mut SeededRng::new(3)).is_err());
}

fn feature_set(rng: &mut SeededRng, offset: f64, rows: usize) -> FeatureSet {
    let dim = 4;
    let local: Vec<f64> = (0..rows * dim).map(|_| offset + rng.uniform(0.0, 1.0)).collect();
    let centers = (0..rows).map(|i| [i as f64, 0.0, 0.0]).collect();
    FeatureSet::new(centers, local, dim, "test").unwrap()
}

#[test]
fn model_routes_classes_to_separate_banks_and_round_trips() {
    let mut rng = SeededRng::new(5);
    let mut train: Vec<FeatureSet> = (0..30).map(|_| feature_set(&mut rng, 0.0, 20)).collect();
    train.extend((0..30).map(|_| feature_set(&mut rng, 50.0, 20)));
    let model = build_model(
        &train,
        &BuildOptions {
            k: 2,
            seed: 9,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(model.bank_sizes(), vec![60, 60]);
    let bytes = encode_model(&model);
    let back = decode_model(&bytes).unwrap();
    assert_eq!(encode_model(&back), bytes);
    assert_eq!(back.bank_sizes(), model.bank_sizes());
    for (a, b) in back.centers.iter().flatten().zip(model.centers.iter().flatten()) {
        assert_eq!(*a, *b as f32 as f64);
    }
}

#[test]
fn too_many_clusters_is_an_error() {
    let mut rng = SeededRng::new(6);
    let train = vec![feature_set(&mut rng, 0.0, 5)];
    let opts = BuildOptions {
        k: 2,
        ..Default::default()
    };
    assert!(build_model(&train, &opts).is_err());
}
