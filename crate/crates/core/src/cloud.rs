//! Point-cloud data model.

use crate::error::{GlfmError, Result};

pub type Point3 = [f64; 3];

/// Ordered 3D points with an optional per-point binary anomaly mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    id: String,
    points: Vec<Point3>,
    mask: Option<Vec<bool>>,
}

impl PointCloud {
    pub fn new(id: impl Into<String>, points: Vec<Point3>, mask: Option<Vec<bool>>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(GlfmError::InvalidInput(format!("point {i} has a non-finite coordinate")));
        }
        if let Some(m) = &mask {
            if m.len() != points.len() {
                return Err(GlfmError::InvalidInput(format!(
                    "mask length {} does not match point count {}",
                    m.len(),
                    points.len()
                )));
            }
        }
        Ok(Self {
            id: id.into(),
            points,
            mask,
        })
    }

    pub fn from_points(id: impl Into<String>, points: Vec<Point3>) -> Result<Self> {
        Self::new(id, points, None)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_mask(self, mask: Option<Vec<bool>>) -> Result<Self> {
        Self::new(self.id, self.points, mask)
    }

    /// Keeps points whose `keep` flag is set, preserving order and mask.
    pub fn retain(&self, keep: &[bool]) -> PointCloud {
        let points = self
            .points
            .iter()
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|(p, _)| *p)
            .collect();
        let mask = self.mask.as_ref().map(|m| {
            m.iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(v, _)| *v)
                .collect()
        });
        PointCloud {
            id: self.id.clone(),
            points,
            mask,
        }
    }

    pub fn centroid(&self) -> Point3 {
        centroid(&self.points)
    }

    pub fn into_parts(self) -> (String, Vec<Point3>, Option<Vec<bool>>) {
        (self.id, self.points, self.mask)
    }
}

pub fn centroid(points: &[Point3]) -> Point3 {
    let mut c = [0.0; 3];
    if points.is_empty() {
        return c;
    }
    for p in points {
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    let n = points.len() as f64;
    [c[0] / n, c[1] / n, c[2] / n]
}

#[inline]
pub fn sub(a: &Point3, b: &Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn dot(a: &Point3, b: &Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: &Point3, b: &Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: &Point3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: &Point3, b: &Point3) -> f64 {
    norm(&sub(a, b))
}
