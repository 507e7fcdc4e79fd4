mod common;

use common::brute_knn;
use glfm_core::nn::NnIndex;
use glfm_core::SeededRng;
use proptest::prelude::*;

fn random_vectors(rng: &mut SeededRng, n: usize, dim: usize, grid: bool) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| if grid { rng.below(6) as f64 } else { rng.uniform(-1.0, 1.0) })
                .collect()
        })
        .collect()
}

fn check(data: &[Vec<f64>], rng: &mut SeededRng, queries: usize, k: usize) {
    let index = NnIndex::build(data).unwrap();
    let dim = data[0].len();
    for _ in 0..queries {
        let q: Vec<f64> = if rng.bernoulli(0.3) {
            data[rng.below(data.len())].clone()
        } else {
            (0..dim).map(|_| rng.uniform(-1.5, 6.0)).collect()
        };
        let got: Vec<usize> = index.knn(&q, k).unwrap().iter().map(|n| n.index).collect();
        assert_eq!(got, brute_knn(data, &q, k));
    }
}

#[test]
fn knn_matches_scan_in_3d() {
    let mut rng = SeededRng::new(11);
    let data = random_vectors(&mut rng, 1000, 3, false);
    check(&data, &mut rng, 100, 10);
}

#[test]
fn knn_matches_scan_in_64d() {
    let mut rng = SeededRng::new(12);
    let data = random_vectors(&mut rng, 500, 64, false);
    check(&data, &mut rng, 100, 10);
}

#[test]
fn knn_tie_rule_on_integer_grid() {
    let mut rng = SeededRng::new(13);
    let data = random_vectors(&mut rng, 1000, 3, true);
    check(&data, &mut rng, 100, 25);
}

#[test]
fn within_matches_scan() {
    let mut rng = SeededRng::new(14);
    let data = random_vectors(&mut rng, 800, 3, false);
    let index = NnIndex::build(&data).unwrap();
    for _ in 0..50 {
        let q: Vec<f64> = (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let r = rng.uniform(0.05, 0.5);
        let mut got: Vec<usize> = index.within(&q, r).unwrap().iter().map(|n| n.index).collect();
        got.sort_unstable();
        let want: Vec<usize> = (0..data.len()).filter(|&i| common::sq(&data[i], &q) <= r * r).collect();
        assert_eq!(got, want);
    }
}

proptest! {
    #[test]
    fn knn_is_exact_for_any_small_set(
        pts in prop::collection::vec(prop::array::uniform3(-5i8..5), 1..80),
        q in prop::array::uniform3(-6i8..6),
        k in 1usize..12,
    ) {
        let data: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|&v| v as f64).collect()).collect();
        let q: Vec<f64> = q.iter().map(|&v| v as f64).collect();
        let index = NnIndex::build(&data).unwrap();
        let k = k.min(data.len());
        let got: Vec<usize> = index.knn(&q, k).unwrap().iter().map(|n| n.index).collect();
        prop_assert_eq!(got, brute_knn(&data, &q, k));
    }
}
