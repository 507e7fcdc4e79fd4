//! PCA surface normals with outward orientation.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use crate::cloud::{dot, sub, Point3};
use crate::nn::{Neighbor, NnIndex};

/// Dot products with |d| at or below this are treated as undecided.
pub const ORIENTATION_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalEstimate {
    pub normal: Point3,
    /// Covariance rank < 2 (coincident or collinear neighborhood); `normal`
    /// is then +z.
    pub degenerate: bool,
}

/// Eigenvector of the neighborhood covariance with the smallest eigenvalue.
/// The sign is arbitrary; see [`orient_outward`].
pub fn pca_normal(points: &[Point3], neighborhood: &[usize]) -> NormalEstimate {
    let fallback = NormalEstimate {
        normal: [0.0, 0.0, 1.0],
        degenerate: true,
    };
    if neighborhood.len() < 3 {
        return fallback;
    }
    let n = neighborhood.len() as f64;
    let mut mean = [0.0; 3];
    for &i in neighborhood {
        for k in 0..3 {
            mean[k] += points[i][k];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut cov = Matrix3::<f64>::zeros();
    for &i in neighborhood {
        let d = Vector3::from(sub(&points[i], &mean));
        cov += d * d.transpose();
    }
    cov /= n;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let l1 = eig.eigenvalues[order[0]];
    let l2 = eig.eigenvalues[order[1]];
    if !(l1 > 0.0) || l2 <= 1e-10 * l1 {
        return fallback;
    }
    let v = eig.eigenvectors.column(order[2]);
    let len = v.norm();
    NormalEstimate {
        normal: [v[0] / len, v[1] / len, v[2] / len],
        degenerate: false,
    }
}

/// Flips `normal` to point away from `centroid` as seen from `at`. When the
/// dot product is within [`ORIENTATION_EPS`] of zero, the sign is chosen to
/// make the first non-negligible of (z, y, x) positive.
pub fn orient_outward(normal: Point3, at: &Point3, centroid: &Point3) -> Point3 {
    let d = dot(&normal, &sub(at, centroid));
    let flip = if d.abs() > ORIENTATION_EPS {
        d < 0.0
    } else {
        let pick = [normal[2], normal[1], normal[0]]
            .into_iter()
            .find(|c| c.abs() > 1e-12)
            .unwrap_or(1.0);
        pick < 0.0
    };
    if flip {
        [-normal[0], -normal[1], -normal[2]]
    } else {
        normal
    }
}

/// The `k` nearest neighbors of stored point `reference`, excluding that
/// point itself (by index; exact duplicates are kept).
pub fn neighbors_excluding(index: &NnIndex, points: &[Point3], reference: usize, k: usize) -> Vec<Neighbor> {
    let want = (k + 1).min(index.len());
    let mut found = index
        .knn(&points[reference], want)
        .expect("reference point is part of the index");
    match found.iter().position(|n| n.index == reference) {
        Some(pos) => {
            found.remove(pos);
        }
        None => {
            found.truncate(k);
        }
    }
    found.truncate(k);
    found
}

/// Oriented normals for every point from their `k` nearest neighbors
/// (the point itself included).
pub fn estimate_normals(points: &[Point3], index: &NnIndex, k: usize, centroid: &Point3) -> Vec<Point3> {
    let k = k.min(points.len());
    points
        .par_iter()
        .map(|p| {
            let nb: Vec<usize> = index.knn(p, k).unwrap().iter().map(|n| n.index).collect();
            let est = pca_normal(points, &nb);
            if est.degenerate {
                est.normal
            } else {
                orient_outward(est.normal, p, centroid)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_neighborhood_gives_z() {
        let pts: Vec<Point3> = (0..9).map(|i| [(i % 3) as f64, (i / 3) as f64, 0.0]).collect();
        let est = pca_normal(&pts, &(0..9).collect::<Vec<_>>());
        assert!(!est.degenerate);
        assert!((est.normal[2].abs() - 1.0).abs() < 1e-12);
        let o = orient_outward(est.normal, &pts[4], &[1.0, 1.0, 0.0]);
        assert_eq!(o[2].signum(), 1.0);
    }

    #[test]
    fn collinear_is_degenerate() {
        let pts: Vec<Point3> = (0..5).map(|i| [i as f64, 2.0 * i as f64, 0.0]).collect();
        let est = pca_normal(&pts, &[0, 1, 2, 3, 4]);
        assert!(est.degenerate);
        assert_eq!(est.normal, [0.0, 0.0, 1.0]);
        let same = vec![[1.0; 3]; 4];
        assert!(pca_normal(&same, &[0, 1, 2, 3]).degenerate);
    }

    #[test]
    fn orientation_points_away_from_centroid() {
        let n = orient_outward([0.0, 0.0, -1.0], &[0.0, 0.0, 1.0], &[0.0; 3]);
        assert_eq!(n, [0.0, 0.0, 1.0]);
        let n = orient_outward([0.0, 0.0, 1.0], &[0.0, 0.0, -1.0], &[0.0; 3]);
        assert_eq!(n, [0.0, 0.0, -1.0]);
    }
}
