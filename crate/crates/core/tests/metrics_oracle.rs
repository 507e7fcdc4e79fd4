mod common;

use common::{brute_regions, dense_sweep_aupro, pairwise_auroc};
use glfm_core::eval::{aupro, auroc, connected_regions, evaluate, EvalOptions, EvalSample};
use glfm_core::SeededRng;

fn random_instance(rng: &mut SeededRng, n: usize) -> (Vec<f64>, Vec<bool>) {
    loop {
        let coarse = rng.bernoulli(0.5);
        let labels: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.3)).collect();
        let scores: Vec<f64> = labels
            .iter()
            .map(|&l| {
                let s = rng.normal() + if l { 1.0 } else { 0.0 };
                if coarse {
                    (s * 2.0).round()
                } else {
                    s
                }
            })
            .collect();
        if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
            return (scores, labels);
        }
    }
}

#[test]
fn auroc_matches_pairwise_count() {
    let mut rng = SeededRng::new(31);
    for _ in 0..100 {
        let n = 2 + rng.below(300);
        let (s, l) = random_instance(&mut rng, n);
        assert!((auroc(&s, &l).unwrap() - pairwise_auroc(&s, &l)).abs() <= 1e-12);
    }
}

#[test]
fn auroc_is_invariant_under_monotone_maps() {
    let mut rng = SeededRng::new(32);
    let (s, l) = random_instance(&mut rng, 400);
    let base = auroc(&s, &l).unwrap();
    for _ in 0..10 {
        let a = rng.uniform(0.1, 5.0);
        let b = rng.uniform(-3.0, 3.0);
        let c = rng.uniform(0.2, 2.0);
        let t: Vec<f64> = s.iter().map(|v| a * (c * v).exp() + b).collect();
        assert_eq!(auroc(&t, &l).unwrap(), base);
    }
}

/// Scored points in a few labelled blobs along a line.
fn region_instance(rng: &mut SeededRng) -> (Vec<f64>, Vec<Option<usize>>, Vec<bool>) {
    let regions_n = 1 + rng.below(4);
    let mut scores = Vec::new();
    let mut regions = Vec::new();
    let mut labels = Vec::new();
    for r in 0..regions_n {
        let size = 5 + rng.below(60);
        let strength = rng.uniform(0.0, 2.0);
        for _ in 0..size {
            scores.push(rng.normal() + strength);
            regions.push(Some(r));
            labels.push(true);
        }
    }
    for _ in 0..300 + rng.below(300) {
        scores.push(rng.normal());
        regions.push(None);
        labels.push(false);
    }
    (scores, regions, labels)
}

#[test]
fn aupro_matches_dense_sweep() {
    let mut rng = SeededRng::new(33);
    for case in 0..20 {
        let (s, r, l) = region_instance(&mut rng);
        for limit in [0.3, 1.0] {
            let exact = aupro(&s, &r, &l, limit).unwrap();
            let dense = dense_sweep_aupro(&s, &r, &l, limit, 10_000);
            assert!((exact - dense).abs() <= 1e-3, "case {case} limit {limit}: {exact} vs {dense}");
        }
    }
}

#[test]
fn aupro_with_one_region_and_full_limit_is_auroc() {
    let mut rng = SeededRng::new(34);
    for _ in 0..20 {
        let (s, l) = random_instance(&mut rng, 200);
        let regions: Vec<Option<usize>> = l.iter().map(|&v| v.then_some(0)).collect();
        let a = aupro(&s, &regions, &l, 1.0).unwrap();
        assert!((a - auroc(&s, &l).unwrap()).abs() <= 1e-9);
    }
}

#[test]
fn regions_match_union_find() {
    let mut rng = SeededRng::new(35);
    for _ in 0..30 {
        let pts: Vec<[f64; 3]> = (0..300)
            .map(|_| [rng.uniform(0.0, 4.0), rng.uniform(0.0, 4.0), rng.uniform(0.0, 0.2)])
            .collect();
        let mask: Vec<bool> = (0..300).map(|_| rng.bernoulli(0.4)).collect();
        let r = rng.uniform(0.1, 0.5);
        assert_eq!(connected_regions(&pts, &mask, r).unwrap(), brute_regions(&pts, &mask, r));
    }
}

#[test]
fn self_test_reports_object_auroc_as_undefined() {
    let pts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
    let samples = vec![EvalSample {
        id: "a".into(),
        class: "c".into(),
        points: pts,
        point_scores: vec![0.0, 0.0],
        object_score: 0.0,
        mask: None,
    }];
    let rep = evaluate(&samples, &EvalOptions::default()).unwrap();
    assert_eq!(rep.o_roc, None);
    assert_eq!(rep.p_roc, None);
    let json = serde_json::to_string(&rep).unwrap();
    assert!(json.contains("\"o_roc\":null"));
}
