//! Background removal by RANSAC plane fitting.

use crate::cloud::{cross, dot, norm, sub, PointCloud};
use crate::rng::SeededRng;

pub const RANSAC_ITERATIONS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl Plane {
    fn through(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> Option<Plane> {
        let n = cross(&sub(b, a), &sub(c, a));
        let len = norm(&n);
        if len <= 1e-12 * (norm(&sub(b, a)) * norm(&sub(c, a))).max(f64::MIN_POSITIVE) {
            return None;
        }
        let normal = [n[0] / len, n[1] / len, n[2] / len];
        Some(Plane {
            normal,
            offset: -dot(&normal, a),
        })
    }

    pub fn distance(&self, p: &[f64; 3]) -> f64 {
        (dot(&self.normal, p) + self.offset).abs()
    }
}

/// Best plane found in [`RANSAC_ITERATIONS`] draws and its inlier count.
/// Earlier candidates win ties.
pub fn fit_plane(cloud: &PointCloud, dist_threshold: f64, rng: &mut SeededRng) -> Option<(Plane, usize)> {
    let pts = cloud.points();
    let n = pts.len();
    if n < 3 {
        return None;
    }
    let mut best: Option<(Plane, usize)> = None;
    for _ in 0..RANSAC_ITERATIONS {
        let i = rng.below(n);
        let mut j = rng.below(n - 1);
        if j >= i {
            j += 1;
        }
        let mut k = rng.below(n - 2);
        for taken in [i.min(j), i.max(j)] {
            if k >= taken {
                k += 1;
            }
        }
        let Some(plane) = Plane::through(&pts[i], &pts[j], &pts[k]) else {
            continue;
        };
        let inliers = pts.iter().filter(|p| plane.distance(p) <= dist_threshold).count();
        if best.map_or(true, |(_, c)| inliers > c) {
            best = Some((plane, inliers));
        }
    }
    best
}

/// Drops the inliers of the dominant plane when it covers at least
/// `min_inlier_frac` of the cloud. Otherwise the cloud is returned unchanged.
pub fn remove_dominant_plane(
    cloud: &PointCloud,
    dist_threshold: f64,
    min_inlier_frac: f64,
    rng: &mut SeededRng,
) -> PointCloud {
    let Some((plane, count)) = fit_plane(cloud, dist_threshold, rng) else {
        return cloud.clone();
    };
    if (count as f64) < min_inlier_frac * cloud.len() as f64 {
        return cloud.clone();
    }
    let keep: Vec<bool> = cloud
        .points()
        .iter()
        .map(|p| plane.distance(p) > dist_threshold)
        .collect();
    cloud.retain(&keep)
}
