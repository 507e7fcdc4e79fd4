mod common;

use common::{fibonacci_sphere, random_surface};
use glfm_core::cloud::centroid;
use glfm_core::features::{extract_local_features, farthest_point_sampling, fpfh_at, ExtractorConfig, FpfhRadius};
use glfm_core::nn::NnIndex;
use glfm_core::normals::estimate_normals;
use glfm_core::{PointCloud, SeededRng};
use proptest::prelude::*;
use std::f64::consts::PI;

type P = [f64; 3];

fn d(a: &P, b: &P) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn dotp(a: &P, b: &P) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn crossp(a: &P, b: &P) -> P {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn unit(a: P) -> P {
    let l = dotp(&a, &a).sqrt();
    [a[0] / l, a[1] / l, a[2] / l]
}

/// Textbook point-pair features, written independently of the library.
fn pair(ps: &P, ns: &P, pt: &P, nt: &P) -> Option<(f64, f64, f64)> {
    let dv = [pt[0] - ps[0], pt[1] - ps[1], pt[2] - ps[2]];
    let len = dotp(&dv, &dv).sqrt();
    if len == 0.0 {
        return None;
    }
    let du = [dv[0] / len, dv[1] / len, dv[2] / len];
    let (ns_, nt_, du) = if dotp(ns, &du).abs().acos() <= dotp(nt, &du).abs().acos() {
        (ns, nt, du)
    } else {
        (nt, ns, [-du[0], -du[1], -du[2]])
    };
    let v = crossp(&du, ns_);
    if dotp(&v, &v) == 0.0 {
        return None;
    }
    let v = unit(v);
    let w = crossp(ns_, &v);
    Some((dotp(&w, nt_).atan2(dotp(ns_, nt_)), dotp(&v, nt_), dotp(ns_, &du)))
}

fn bin(x: f64, lo: f64, hi: f64) -> usize {
    (((x - lo) / (hi - lo) * 11.0).floor().max(0.0) as usize).min(10)
}

fn spfh(pts: &[P], ns: &[P], p: usize, r: f64) -> [f64; 33] {
    let feats: Vec<_> = (0..pts.len())
        .filter(|&q| q != p && d(&pts[p], &pts[q]) <= r)
        .filter_map(|q| pair(&pts[p], &ns[p], &pts[q], &ns[q]))
        .collect();
    let mut h = [0.0; 33];
    for &(t, a, f) in &feats {
        let inc = 1.0 / feats.len() as f64;
        h[bin(t, -PI, PI)] += inc;
        h[11 + bin(a, -1.0, 1.0)] += inc;
        h[22 + bin(f, -1.0, 1.0)] += inc;
    }
    h
}

fn fpfh(pts: &[P], ns: &[P], c: usize, r: f64) -> [f64; 33] {
    let mut h = spfh(pts, ns, c, r);
    let nb: Vec<usize> = (0..pts.len())
        .filter(|&q| q != c && d(&pts[c], &pts[q]) <= r && d(&pts[c], &pts[q]) > 0.0)
        .collect();
    for &q in &nb {
        let s = spfh(pts, ns, q, r);
        let w = 1.0 / (nb.len() as f64 * d(&pts[c], &pts[q]));
        for b in 0..33 {
            h[b] += w * s[b];
        }
    }
    for block in h.chunks_mut(11) {
        let s: f64 = block.iter().sum();
        if s > 0.0 {
            block.iter_mut().for_each(|v| *v /= s);
        }
    }
    h
}

#[test]
fn fpfh_matches_direct_definition() {
    let mut rng = SeededRng::new(51);
    for case in 0..5 {
        let pts = if case % 2 == 0 {
            random_surface(&mut rng, 400)
        } else {
            fibonacci_sphere(400, 1.0)
        };
        let index = NnIndex::build(&pts).unwrap();
        let normals = estimate_normals(&pts, &index, 12, &centroid(&pts));
        let centers = farthest_point_sampling(&pts, 20).unwrap();
        let r = 0.25;
        let (desc, _) = fpfh_at(&pts, &normals, &index, &centers, r);
        for (h, &c) in desc.iter().zip(&centers) {
            let want = fpfh(&pts, &normals, c, r);
            for b in 0..33 {
                assert!((h[b] - want[b]).abs() <= 1e-12, "case {case} center {c} bin {b}");
            }
        }
    }
}

#[test]
fn fps_matches_quadratic_oracle() {
    let mut rng = SeededRng::new(52);
    for _ in 0..20 {
        let pts = random_surface(&mut rng, 300);
        let m = 1 + rng.below(60);
        let c = centroid(&pts);
        let sqd = |a: &P, b: &P| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
        let mut picks = vec![(0..pts.len()).fold(0, |best, i| if sqd(&pts[i], &c) < sqd(&pts[best], &c) { i } else { best })];
        while picks.len() < m {
            let mut best = (0, -1.0);
            for i in 0..pts.len() {
                let dm = picks.iter().map(|&p| sqd(&pts[i], &pts[p])).fold(f64::INFINITY, f64::min);
                if dm > best.1 {
                    best = (i, dm);
                }
            }
            picks.push(best.0);
        }
        assert_eq!(farthest_point_sampling(&pts, m).unwrap(), picks);
    }
}

fn rigid(pts: &[P], (a, b, c): (f64, f64, f64), t: P) -> Vec<P> {
    let rz = |p: P, a: f64| [a.cos() * p[0] - a.sin() * p[1], a.sin() * p[0] + a.cos() * p[1], p[2]];
    let rx = |p: P, a: f64| [p[0], a.cos() * p[1] - a.sin() * p[2], a.sin() * p[1] + a.cos() * p[2]];
    pts.iter()
        .map(|&p| {
            let q = rz(rx(rz(p, a), b), c);
            [q[0] + t[0], q[1] + t[1], q[2] + t[2]]
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]
    #[test]
    fn descriptors_survive_rigid_motion(
        angles in (0.0..6.3f64, 0.0..6.3f64, 0.0..6.3f64),
        t in prop::array::uniform3(-5.0..5.0f64),
        fixed in any::<bool>(),
    ) {
        let pts = random_surface(&mut SeededRng::new(53), 1500);
        let cfg = ExtractorConfig {
            patch_count: Some(64),
            fpfh_radius: if fixed { FpfhRadius::Fixed(0.2) } else { FpfhRadius::Auto },
            ..Default::default()
        };
        let a = extract_local_features(&PointCloud::from_points("a", pts.clone()).unwrap(), &cfg).unwrap();
        let b = extract_local_features(&PointCloud::from_points("b", rigid(&pts, angles, t)).unwrap(), &cfg).unwrap();
        prop_assert_eq!(a.patch_count(), b.patch_count());
        for i in 0..a.patch_count() {
            let (x, y) = (a.row(i), b.row(i));
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let diff = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            prop_assert!(diff < 1e-6 * norm, "center {}: {} vs norm {}", i, diff, norm);
        }
    }
}

#[test]
fn each_histogram_block_sums_to_one() {
    let pts = fibonacci_sphere(2000, 1.0);
    let fs = extract_local_features(&PointCloud::from_points("s", pts).unwrap(), &ExtractorConfig::default()).unwrap();
    assert_eq!(fs.patch_count(), 250);
    for r in fs.rows() {
        for block in r.chunks(11) {
            assert!((block.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn flat_patch_histograms_agree() {
    let mut rng = SeededRng::new(54);
    let pts: Vec<P> = (0..2000).map(|_| [rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 0.0]).collect();
    let cfg = ExtractorConfig {
        patch_count: Some(64),
        ..Default::default()
    };
    let fs = extract_local_features(&PointCloud::from_points("flat", pts).unwrap(), &cfg).unwrap();
    let rows: Vec<&[f64]> = fs.rows().collect();
    let mean_norm = rows.iter().map(|r| dotp_n(r, r).sqrt()).sum::<f64>() / rows.len() as f64;
    for r in &rows {
        // coplanar pairs: theta = 0, alpha = 0 and phi = 0 all fall in bin 5
        assert!(r[5] > 0.9 && r[16] > 0.9 && r[27] > 0.9, "{r:?}");
    }
    for a in &rows {
        for b in &rows {
            let d: f64 = a.iter().zip(*b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            assert!(d < 0.1 * mean_norm, "{d} vs {mean_norm}");
        }
    }
}

fn dotp_n(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn planes_and_spheres_separate_globally() {
    let cfg = ExtractorConfig {
        patch_count: Some(64),
        ..Default::default()
    };
    let global = |pts: Vec<P>| {
        extract_local_features(&PointCloud::from_points("g", pts).unwrap(), &cfg)
            .unwrap()
            .global()
            .to_vec()
    };
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    for seed in 0..10 {
        let mut rng = SeededRng::new(600 + seed);
        let mut plane = || global((0..1500).map(|_| [rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 0.005 * rng.normal()]).collect());
        let (p1, p2) = (plane(), plane());
        let sphere = |r: f64, rng: &mut SeededRng| {
            global(
                (0..1500)
                    .map(|_| {
                        let v = [rng.normal(), rng.normal(), rng.normal()];
                        let l = dotp(&v, &v).sqrt();
                        [r * v[0] / l, r * v[1] / l, r * v[2] / l]
                    })
                    .collect(),
            )
        };
        let (s1, s2) = (sphere(0.3, &mut rng), sphere(0.31, &mut rng));
        let inter = dist(&p1, &s1).min(dist(&p2, &s2)).min(dist(&p1, &s2)).min(dist(&p2, &s1));
        let intra = dist(&p1, &p2).max(dist(&s1, &s2));
        assert!(inter > intra, "seed {seed}: inter {inter} <= intra {intra}");
    }
}
