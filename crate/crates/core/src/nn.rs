//! Exact Euclidean nearest-neighbor search.
//!
//! A bucketed k-d tree for low-dimensional data; above [`TREE_MAX_DIM`]
//! dimensions the index is a single bucket and queries are a linear scan.
//! Results are ordered by (distance, original index), so ties always resolve
//! to the smaller original index.

use std::cmp::Ordering;

use crate::error::{GlfmError, Result};

const LEAF_SIZE: usize = 16;
pub const TREE_MAX_DIM: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct NnIndex {
    dim: usize,
    // rows in tree order
    data: Vec<f64>,
    ids: Vec<usize>,
    nodes: Vec<Node>,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

#[inline]
fn key_lt(d2: f64, idx: usize, other_d2: f64, other_idx: usize) -> bool {
    d2 < other_d2 || (d2 == other_d2 && idx < other_idx)
}

/// Bounded best-k list kept sorted by (squared distance, index).
struct BestK {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl BestK {
    fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    fn full(&self) -> bool {
        self.items.len() == self.k
    }

    fn worst(&self) -> f64 {
        if self.full() {
            self.items[self.k - 1].0
        } else {
            f64::INFINITY
        }
    }

    fn offer(&mut self, d2: f64, idx: usize) {
        if self.full() {
            let (wd, wi) = self.items[self.k - 1];
            if !key_lt(d2, idx, wd, wi) {
                return;
            }
            self.items.pop();
        }
        let pos = self
            .items
            .partition_point(|&(d, i)| key_lt(d, i, d2, idx));
        self.items.insert(pos, (d2, idx));
    }
}

impl NnIndex {
    /// Builds an index from row vectors. All rows must share one dimension.
    pub fn build<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Self> {
        let first = vectors
            .first()
            .ok_or_else(|| GlfmError::InvalidInput("cannot index an empty vector set".into()))?;
        let dim = first.as_ref().len();
        if dim == 0 {
            return Err(GlfmError::InvalidInput("vectors must have dimension >= 1".into()));
        }
        let mut flat = Vec::with_capacity(vectors.len() * dim);
        for v in vectors {
            let v = v.as_ref();
            if v.len() != dim {
                return Err(GlfmError::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            flat.extend_from_slice(v);
        }
        Self::from_flat(flat, dim)
    }

    /// Builds from row-major storage of `data.len() / dim` rows.
    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(GlfmError::InvalidInput(format!(
                "flat buffer of {} values is not a non-empty multiple of dimension {dim}",
                data.len()
            )));
        }
        let n = data.len() / dim;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut nodes = Vec::new();
        if dim <= TREE_MAX_DIM {
            build_node(&data, dim, &mut perm, 0, n, &mut nodes);
        } else {
            nodes.push(Node::Leaf { start: 0, end: n });
        }
        let mut ordered = Vec::with_capacity(data.len());
        for &i in &perm {
            ordered.extend_from_slice(&data[i * dim..(i + 1) * dim]);
        }
        Ok(Self {
            dim,
            data: ordered,
            ids: perm,
            nodes,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Stored vector by original index.
    pub fn vector(&self, original: usize) -> Option<&[f64]> {
        let slot = self.ids.iter().position(|&i| i == original)?;
        Some(self.row(slot))
    }

    #[inline]
    fn row(&self, slot: usize) -> &[f64] {
        &self.data[slot * self.dim..(slot + 1) * self.dim]
    }

    fn check_query(&self, query: &[f64]) -> Result<()> {
        if query.len() != self.dim {
            return Err(GlfmError::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        Ok(())
    }

    /// The `k` nearest stored vectors, ascending by distance.
    pub fn knn(&self, query: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        self.check_query(query)?;
        if k == 0 || k > self.len() {
            return Err(GlfmError::InvalidInput(format!(
                "k = {k} must be in 1..={}",
                self.len()
            )));
        }
        let mut best = BestK::new(k);
        self.search_knn(0, query, &mut best);
        Ok(best
            .items
            .into_iter()
            .map(|(d2, index)| Neighbor {
                index,
                distance: d2.sqrt(),
            })
            .collect())
    }

    pub fn nearest(&self, query: &[f64]) -> Result<Neighbor> {
        Ok(self.knn(query, 1)?[0])
    }

    /// All stored vectors within `radius` (inclusive), ascending by distance.
    pub fn within(&self, query: &[f64], radius: f64) -> Result<Vec<Neighbor>> {
        self.check_query(query)?;
        let r2 = radius * radius;
        let mut out = Vec::new();
        self.search_radius(0, query, r2, &mut out);
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
        Ok(out
            .into_iter()
            .map(|(d2, index)| Neighbor {
                index,
                distance: d2.sqrt(),
            })
            .collect())
    }

    fn search_knn(&self, node: usize, q: &[f64], best: &mut BestK) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start..end {
                    best.offer(sq_dist(q, self.row(slot)), self.ids[slot]);
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search_knn(near, q, best);
                // `<=` keeps equal-distance candidates reachable for the tie rule.
                if diff * diff <= best.worst() {
                    self.search_knn(far, q, best);
                }
            }
        }
    }

    fn search_radius(&self, node: usize, q: &[f64], r2: f64, out: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start..end {
                    let d2 = sq_dist(q, self.row(slot));
                    if d2 <= r2 {
                        out.push((d2, self.ids[slot]));
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search_radius(near, q, r2, out);
                if diff * diff <= r2 {
                    self.search_radius(far, q, r2, out);
                }
            }
        }
    }
}

fn build_node(data: &[f64], dim: usize, perm: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    let count = end - start;
    if count <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let coord = |i: usize, a: usize| data[i * dim + a];
    let mut axis = 0;
    let mut spread = -1.0;
    for a in 0..dim {
        let (lo, hi) = perm[start..end]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = coord(i, a);
                (lo.min(v), hi.max(v))
            });
        if hi - lo > spread {
            spread = hi - lo;
            axis = a;
        }
    }
    if spread <= 0.0 {
        // all coincident
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let mid = count / 2;
    perm[start..end].select_nth_unstable_by(mid, |&a, &b| {
        coord(a, axis).partial_cmp(&coord(b, axis)).unwrap_or(Ordering::Equal)
    });
    let value = coord(perm[start + mid], axis);
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let left = build_node(data, dim, perm, start, start + mid, nodes);
    let right = build_node(data, dim, perm, start + mid, end, nodes);
    nodes[id] = Node::Split { axis, value, left, right };
    id
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_vector() {
        let idx = NnIndex::build(&[vec![0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(idx.len(), 1);
        let n = idx.nearest(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(n.index, 0);
        assert_eq!(n.distance, 1.0);
    }

    #[test]
    fn line_of_three() {
        let idx = NnIndex::build(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
        let r = idx.knn(&[0.1, 0.0, 0.0], 2).unwrap();
        assert_eq!(r.iter().map(|n| n.index).collect::<Vec<_>>(), vec![0, 1]);
        assert!((r[0].distance - 0.1).abs() < 1e-15);
        assert!((r[1].distance - 0.9).abs() < 1e-15);
        let s = idx.knn(&[2.0, 0.0, 0.0], 1).unwrap();
        assert_eq!((s[0].index, s[0].distance), (2, 0.0));
    }

    #[test]
    fn errors() {
        assert!(NnIndex::build::<Vec<f64>>(&[]).is_err());
        assert!(NnIndex::build(&[vec![0.0, 1.0], vec![0.0]]).is_err());
        let idx = NnIndex::build(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert!(idx.knn(&[0.0, 0.0], 3).is_err());
        assert!(idx.knn(&[0.0, 0.0], 0).is_err());
        assert!(idx.knn(&[0.0], 1).is_err());
    }

    #[test]
    fn ties_prefer_smaller_index() {
        // many duplicates straddling split planes
        let mut pts = Vec::new();
        for i in 0..100 {
            pts.push([(i % 3) as f64, 0.0, 0.0]);
        }
        let idx = NnIndex::build(&pts).unwrap();
        let r = idx.knn(&[1.0, 0.0, 0.0], 5).unwrap();
        assert_eq!(r.iter().map(|n| n.index).collect::<Vec<_>>(), vec![1, 4, 7, 10, 13]);
    }

    #[test]
    fn within_radius_matches_scan() {
        let pts: Vec<[f64; 3]> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.37;
                [t.sin(), (1.3 * t).cos(), (0.7 * t).sin()]
            })
            .collect();
        let idx = NnIndex::build(&pts).unwrap();
        let q = [0.1, 0.2, -0.1];
        let got: Vec<usize> = idx.within(&q, 0.5).unwrap().iter().map(|n| n.index).collect();
        let mut want: Vec<(f64, usize)> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| (sq_dist(&q, p), i))
            .filter(|(d, _)| *d <= 0.25)
            .collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want.iter().map(|w| w.1).collect::<Vec<_>>());
    }
}
