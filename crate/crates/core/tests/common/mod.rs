//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use glfm_core::SeededRng;

pub fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k nearest by full scan, ordered by (squared distance, index).
pub fn brute_knn(data: &[Vec<f64>], q: &[f64], k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = data.iter().enumerate().map(|(i, v)| (sq(v, q), i)).collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Greedy farthest-first selection recomputing every distance at every step.
pub fn greedy_coreset(rows: &[Vec<f64>], target: usize) -> Vec<usize> {
    let n = rows.len();
    let dim = rows[0].len();
    let mut c = vec![0.0; dim];
    for r in rows {
        for (a, v) in c.iter_mut().zip(r) {
            *a += v;
        }
    }
    for a in &mut c {
        *a /= n as f64;
    }
    let mut first = 0;
    for i in 1..n {
        if sq(&rows[i], &c) > sq(&rows[first], &c) {
            first = i;
        }
    }
    let mut picks = vec![first];
    while picks.len() < target {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if picks.contains(&i) {
                continue;
            }
            let d = picks.iter().map(|&p| sq(&rows[i], &rows[p])).fold(f64::INFINITY, f64::min);
            if best.map_or(true, |(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        picks.push(best.unwrap().0);
    }
    picks
}

/// Largest distance from any row to its nearest selected row.
pub fn covering_radius(rows: &[Vec<f64>], picks: &[usize]) -> f64 {
    rows.iter()
        .map(|r| picks.iter().map(|&p| sq(r, &rows[p])).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
        .sqrt()
}

/// Optimal k-center radius by enumerating all subsets of size `k`.
pub fn exhaustive_k_center(rows: &[Vec<f64>], k: usize) -> f64 {
    let n = rows.len();
    let mut best = f64::INFINITY;
    for bits in 0u32..(1 << n) {
        if bits.count_ones() as usize != k {
            continue;
        }
        let picks: Vec<usize> = (0..n).filter(|i| bits >> i & 1 == 1).collect();
        best = best.min(covering_radius(rows, &picks));
    }
    best
}

/// P(pos > neg) + P(tie)/2 over all pairs.
pub fn pairwise_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    num / pairs
}

/// PRO area by sweeping `steps` evenly spaced thresholds between the extreme
/// scores and integrating with the trapezoid rule up to `limit`.
pub fn dense_sweep_aupro(scores: &[f64], regions: &[Option<usize>], labels: &[bool], limit: f64, steps: usize) -> f64 {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n_regions = regions.iter().flatten().max().unwrap() + 1;
    let mut size = vec![0.0; n_regions];
    for r in regions.iter().flatten() {
        size[*r] += 1.0;
    }
    let neg = labels.iter().filter(|&&l| !l).count() as f64;
    let mut pts = vec![(0.0, 0.0)];
    for s in (0..=steps).rev() {
        let t = lo + (hi - lo) * s as f64 / steps as f64;
        let mut hit = vec![0.0; n_regions];
        let mut fp = 0.0;
        for i in 0..scores.len() {
            if scores[i] >= t {
                if let Some(r) = regions[i] {
                    hit[r] += 1.0;
                }
                if !labels[i] {
                    fp += 1.0;
                }
            }
        }
        let pro = hit.iter().zip(&size).map(|(h, s)| h / s).sum::<f64>() / n_regions as f64;
        pts.push((fp / neg, pro));
    }
    let mut area = 0.0;
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x0 >= limit {
            break;
        }
        if x1 <= limit {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            let y = y0 + (y1 - y0) * (limit - x0) / (x1 - x0);
            area += (limit - x0) * (y0 + y) / 2.0;
            break;
        }
    }
    area / limit
}

/// Plain union-find labelling of points within `radius`, ids in order of
/// first appearance.
pub fn brute_regions(points: &[[f64; 3]], mask: &[bool], radius: f64) -> Vec<Option<usize>> {
    let n = points.len();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    for s in 0..n {
        if !mask[s] || label[s].is_some() {
            continue;
        }
        label[s] = Some(next);
        let mut stack = vec![s];
        while let Some(a) = stack.pop() {
            for b in 0..n {
                if mask[b] && label[b].is_none() && sq(&points[a], &points[b]) <= radius * radius {
                    label[b] = Some(next);
                    stack.push(b);
                }
            }
        }
        next += 1;
    }
    label
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0f64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1.0;
    }
    let c2 = |n: f64| n * (n - 1.0) / 2.0;
    let sum_ij: f64 = table.iter().flatten().map(|&v| c2(v)).sum();
    let sum_a: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let sum_b: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let expected = sum_a * sum_b / c2(a.len() as f64);
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return 1.0;
    }
    (sum_ij - expected) / (max - expected)
}

/// Central finite-difference derivative of `f` along coordinate `i`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut up = x.to_vec();
    let mut dn = x.to_vec();
    up[i] += h;
    dn[i] -= h;
    (f(&up) - f(&dn)) / (2.0 * h)
}

pub fn bce(probs: &[f64], labels: &[bool]) -> f64 {
    let mut s = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        s -= if y { p.ln() } else { (1.0 - p).ln() };
    }
    s / probs.len() as f64
}

/// Randomly wiggled height-field surface with `n` points.
pub fn random_surface(rng: &mut SeededRng, n: usize) -> Vec<[f64; 3]> {
    let a = rng.uniform(-0.3, 0.3);
    let b = rng.uniform(-0.3, 0.3);
    let f = rng.uniform(0.5, 3.0);
    (0..n)
        .map(|_| {
            let x = rng.uniform(-1.0, 1.0);
            let y = rng.uniform(-1.0, 1.0);
            [x, y, a * (f * x).sin() + b * (f * y).cos()]
        })
        .collect()
}

/// Points on a sphere of radius `r` by a Fibonacci lattice.
pub fn fibonacci_sphere(n: usize, r: f64) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let rad = (1.0 - z * z).sqrt();
            let t = golden * i as f64;
            [r * rad * t.cos(), r * rad * t.sin(), r * z]
        })
        .collect()
}
