//! Local (per-patch) and global (pooled) features.
//!
//! The built-in extractor computes a 33-bin Fast Point Feature Histogram at
//! farthest-point-sampled patch centers. Features produced elsewhere can be
//! loaded from GLFM-FEAT files:
//!
//! ```text
//! "GFT1" | u32 M | u32 D | M*D f32 (row-major local features) | 3*M f32 (centers)
//! ```
//!
//! All integers and floats are little-endian.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cloud::{centroid, cross, dist, dot, norm, sub, Point3, PointCloud};
use crate::error::{GlfmError, Result};
use crate::nn::NnIndex;
use crate::normals::estimate_normals;

pub const FPFH_BINS: usize = 11;
pub const FPFH_DIM: usize = 3 * FPFH_BINS;
pub const FEATURE_MAGIC: &[u8; 4] = b"GFT1";

/// Per-patch local features, their patch centers and the pooled global
/// feature. `global` is always the column mean of `local`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    centers: Vec<Point3>,
    local: Vec<f64>,
    dim: usize,
    global: Vec<f64>,
    pub extractor_id: String,
    pub layer_tags: Option<Vec<String>>,
}

impl FeatureSet {
    pub fn new(centers: Vec<Point3>, local: Vec<f64>, dim: usize, extractor_id: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(GlfmError::InvalidInput("feature dimension must be >= 1".into()));
        }
        if centers.is_empty() {
            return Err(GlfmError::InvalidInput("a feature set needs at least one patch".into()));
        }
        if local.len() != centers.len() * dim {
            return Err(GlfmError::InvalidInput(format!(
                "{} local values do not form {} rows of dimension {dim}",
                local.len(),
                centers.len()
            )));
        }
        if local.iter().any(|v| !v.is_finite()) || centers.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GlfmError::InvalidInput("feature set contains non-finite values".into()));
        }
        let global = pool_global(&local, dim);
        Ok(Self {
            centers,
            local,
            dim,
            global,
            extractor_id: extractor_id.into(),
            layer_tags: None,
        })
    }

    pub fn centers(&self) -> &[Point3] {
        &self.centers
    }

    pub fn local(&self) -> &[f64] {
        &self.local
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.local[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.local.chunks_exact(self.dim)
    }

    pub fn global(&self) -> &[f64] {
        &self.global
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn patch_count(&self) -> usize {
        self.centers.len()
    }

    /// Applies `f` to every local row and re-pools the global feature.
    pub fn map_rows(&self, mut f: impl FnMut(&mut [f64])) -> FeatureSet {
        let mut local = self.local.clone();
        for row in local.chunks_exact_mut(self.dim) {
            f(row);
        }
        let global = pool_global(&local, self.dim);
        FeatureSet {
            centers: self.centers.clone(),
            local,
            dim: self.dim,
            global,
            extractor_id: self.extractor_id.clone(),
            layer_tags: self.layer_tags.clone(),
        }
    }
}

/// Column mean of a row-major matrix with `dim` columns.
pub fn pool_global(local: &[f64], dim: usize) -> Vec<f64> {
    let rows = local.len() / dim;
    let mut g = vec![0.0; dim];
    for row in local.chunks_exact(dim) {
        for (acc, v) in g.iter_mut().zip(row) {
            *acc += v;
        }
    }
    if rows > 0 {
        for v in &mut g {
            *v /= rows as f64;
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    #[default]
    Fpfh,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Normalize {
    #[default]
    None,
    Zscore,
}

/// FPFH support radius: a fixed length, or a multiple of the cloud's median
/// nearest-neighbor spacing.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FpfhRadius {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for FpfhRadius {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            FpfhRadius::Auto => s.serialize_str("auto"),
            FpfhRadius::Fixed(r) => s.serialize_f64(*r),
        }
    }
}

impl<'de> Deserialize<'de> for FpfhRadius {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(r) => Ok(FpfhRadius::Fixed(r)),
            Raw::Str(s) if s == "auto" => Ok(FpfhRadius::Auto),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("fpfh_radius must be a number or \"auto\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorConfig {
    pub kind: ExtractorKind,
    /// Number of patch centers; `None` means `min(1024, n / 8)`.
    pub patch_count: Option<usize>,
    pub fpfh_radius: FpfhRadius,
    /// Multiple of the median 1-NN spacing used by `FpfhRadius::Auto`.
    pub auto_radius_factor: f64,
    /// Neighbors used for per-point normals.
    pub normal_k: usize,
    pub normalize: Normalize,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            kind: ExtractorKind::Fpfh,
            patch_count: None,
            fpfh_radius: FpfhRadius::Auto,
            auto_radius_factor: 5.0,
            normal_k: 12,
            normalize: Normalize::None,
        }
    }
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_count == Some(0) {
            return Err(GlfmError::InvalidInput("patch_count must be >= 1".into()));
        }
        if let FpfhRadius::Fixed(r) = self.fpfh_radius {
            if !(r > 0.0) || !r.is_finite() {
                return Err(GlfmError::InvalidInput(format!("fpfh_radius must be positive, got {r}")));
            }
        }
        if !(self.auto_radius_factor > 0.0) {
            return Err(GlfmError::InvalidInput("auto_radius_factor must be positive".into()));
        }
        if self.normal_k < 3 {
            return Err(GlfmError::InvalidInput("normal_k must be >= 3".into()));
        }
        Ok(())
    }

    /// Identifier stored in models so detection can refuse mismatched features.
    pub fn extractor_id(&self) -> String {
        match self.kind {
            ExtractorKind::External => "external".to_string(),
            ExtractorKind::Fpfh => {
                let radius = match self.fpfh_radius {
                    FpfhRadius::Auto => format!("auto{}", self.auto_radius_factor),
                    FpfhRadius::Fixed(r) => format!("{r}"),
                };
                format!("fpfh33:r={radius}:nk={}", self.normal_k)
            }
        }
    }

    pub fn patch_count_for(&self, n: usize) -> usize {
        self.patch_count.unwrap_or_else(|| (n / 8).min(1024).max(1))
    }
}

/// Farthest point sampling. The first center is the point nearest the
/// centroid; each next center maximizes the distance to the chosen set.
/// Ties go to the smaller index.
pub fn sample_patch_centers(cloud: &PointCloud, m: usize) -> Result<Vec<usize>> {
    farthest_point_sampling(cloud.points(), m)
}

pub fn farthest_point_sampling(points: &[Point3], m: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if m == 0 || m > n {
        return Err(GlfmError::InvalidInput(format!("cannot sample {m} centers from {n} points")));
    }
    let c = centroid(points);
    let sq = |a: &Point3, b: &Point3| {
        let d = sub(a, b);
        dot(&d, &d)
    };
    let mut first = 0;
    let mut best = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        let d = sq(p, &c);
        if d < best {
            best = d;
            first = i;
        }
    }
    let mut chosen = Vec::with_capacity(m);
    chosen.push(first);
    let mut min_d: Vec<f64> = points.iter().map(|p| sq(p, &points[first])).collect();
    while chosen.len() < m {
        let mut next = 0;
        let mut far = -1.0;
        for (i, &d) in min_d.iter().enumerate() {
            if d > far {
                far = d;
                next = i;
            }
        }
        chosen.push(next);
        let q = points[next];
        for (d, p) in min_d.iter_mut().zip(points) {
            let nd = sq(p, &q);
            if nd < *d {
                *d = nd;
            }
        }
    }
    Ok(chosen)
}

/// Median distance from each point to its nearest other point.
pub fn median_spacing(points: &[Point3], index: &NnIndex) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let mut d: Vec<f64> = points
        .par_iter()
        .map(|p| index.knn(p, 2).unwrap()[1].distance)
        .collect();
    median(&mut d)
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Darboux-frame pair features `(theta, alpha, phi)` for a point pair, with
/// the source chosen as the point whose normal is more aligned with the
/// connecting line. `None` for coincident points or parallel frames.
pub fn pair_features(p1: &Point3, n1: &Point3, p2: &Point3, n2: &Point3) -> Option<(f64, f64, f64)> {
    let mut d = sub(p2, p1);
    let len = norm(&d);
    if len == 0.0 {
        return None;
    }
    let a1 = dot(n1, &d) / len;
    let a2 = dot(n2, &d) / len;
    let (src_n, tgt_n, phi) = if a1.abs().acos() > a2.abs().acos() {
        d = [-d[0], -d[1], -d[2]];
        (n2, n1, -a2)
    } else {
        (n1, n2, a1)
    };
    let v = cross(&d, src_n);
    let v_len = norm(&v);
    if v_len == 0.0 {
        return None;
    }
    let v = [v[0] / v_len, v[1] / v_len, v[2] / v_len];
    let w = cross(src_n, &v);
    let alpha = dot(&v, tgt_n);
    let theta = dot(&w, tgt_n).atan2(dot(src_n, tgt_n));
    Some((theta, alpha, phi))
}

fn bin(value: f64, lo: f64, hi: f64) -> usize {
    let b = (FPFH_BINS as f64 * (value - lo) / (hi - lo)).floor();
    if b < 0.0 {
        0
    } else {
        (b as usize).min(FPFH_BINS - 1)
    }
}

/// Simplified point feature histogram of `p` over `neighbors`.
fn spfh(points: &[Point3], normals: &[Point3], p: usize, neighbors: &[usize]) -> [f64; FPFH_DIM] {
    let mut h = [0.0; FPFH_DIM];
    let mut feats = Vec::with_capacity(neighbors.len());
    for &q in neighbors {
        if q == p {
            continue;
        }
        if let Some(f) = pair_features(&points[p], &normals[p], &points[q], &normals[q]) {
            feats.push(f);
        }
    }
    if feats.is_empty() {
        return h;
    }
    let inc = 1.0 / feats.len() as f64;
    for (theta, alpha, phi) in feats {
        h[bin(theta, -std::f64::consts::PI, std::f64::consts::PI)] += inc;
        h[FPFH_BINS + bin(alpha, -1.0, 1.0)] += inc;
        h[2 * FPFH_BINS + bin(phi, -1.0, 1.0)] += inc;
    }
    h
}

fn normalize_blocks(h: &mut [f64; FPFH_DIM]) {
    for block in h.chunks_exact_mut(FPFH_BINS) {
        let s: f64 = block.iter().sum();
        if s > 0.0 {
            for v in block {
                *v /= s;
            }
        }
    }
}

/// Resolved support radius for `cloud` under `cfg`.
pub fn fpfh_radius_for(points: &[Point3], index: &NnIndex, cfg: &ExtractorConfig) -> f64 {
    match cfg.fpfh_radius {
        FpfhRadius::Fixed(r) => r,
        FpfhRadius::Auto => cfg.auto_radius_factor * median_spacing(points, index),
    }
}

/// FPFH descriptors at `centers` (point indices) with the given radius and
/// per-point normals. Returns the descriptors and how many centers had no
/// neighbor in range.
pub fn fpfh_at(points: &[Point3], normals: &[Point3], index: &NnIndex, centers: &[usize], radius: f64) -> (Vec<[f64; FPFH_DIM]>, usize) {
    let neighborhoods: Vec<Vec<(usize, f64)>> = centers
        .par_iter()
        .map(|&c| {
            index
                .within(&points[c], radius)
                .unwrap()
                .into_iter()
                .filter(|nb| nb.index != c)
                .map(|nb| (nb.index, nb.distance))
                .collect()
        })
        .collect();

    let mut needed: Vec<usize> = centers.to_vec();
    for nb in &neighborhoods {
        needed.extend(nb.iter().map(|&(i, _)| i));
    }
    needed.sort_unstable();
    needed.dedup();
    let spfhs: HashMap<usize, [f64; FPFH_DIM]> = needed
        .par_iter()
        .map(|&p| {
            let nb: Vec<usize> = index
                .within(&points[p], radius)
                .unwrap()
                .iter()
                .map(|n| n.index)
                .collect();
            (p, spfh(points, normals, p, &nb))
        })
        .collect();

    let mut empty = 0;
    let descriptors = centers
        .iter()
        .zip(&neighborhoods)
        .map(|(&c, nb)| {
            if nb.is_empty() {
                empty += 1;
            }
            let mut h = spfhs[&c];
            let weighted: Vec<&(usize, f64)> = nb.iter().filter(|(_, d)| *d > 0.0).collect();
            if !weighted.is_empty() {
                let k = weighted.len() as f64;
                for &&(q, d) in &weighted {
                    let sq = &spfhs[&q];
                    for b in 0..FPFH_DIM {
                        h[b] += sq[b] / (k * d);
                    }
                }
            }
            normalize_blocks(&mut h);
            h
        })
        .collect();
    (descriptors, empty)
}

/// Built-in handcrafted extractor: FPFH at farthest-point-sampled centers.
pub fn extract_local_features(cloud: &PointCloud, cfg: &ExtractorConfig) -> Result<FeatureSet> {
    cfg.validate()?;
    if cfg.kind != ExtractorKind::Fpfh {
        return Err(GlfmError::Extraction("external features must be loaded from files".into()));
    }
    let n = cloud.len();
    if n < 3 {
        return Err(GlfmError::Extraction(format!("cloud '{}' has only {n} points", cloud.id())));
    }
    let points = cloud.points();
    let index = NnIndex::build(points)?;
    let m = cfg.patch_count_for(n);
    let centers = farthest_point_sampling(points, m)?;
    let radius = fpfh_radius_for(points, &index, cfg);
    if !(radius > 0.0) {
        return Err(GlfmError::Extraction(format!(
            "cloud '{}' yields a non-positive FPFH radius {radius}",
            cloud.id()
        )));
    }
    let normals = estimate_normals(points, &index, cfg.normal_k, &centroid(points));
    let (desc, empty) = fpfh_at(points, &normals, &index, &centers, radius);
    if 2 * empty > centers.len() {
        return Err(GlfmError::Extraction(format!(
            "cloud '{}': {empty} of {} centers have no neighbor within radius {radius}",
            cloud.id(),
            centers.len()
        )));
    }
    let local: Vec<f64> = desc.iter().flatten().copied().collect();
    FeatureSet::new(
        centers.iter().map(|&c| points[c]).collect(),
        local,
        FPFH_DIM,
        cfg.extractor_id(),
    )
}

/// Index of the nearest center for each point (ties to the lower index).
pub fn assign_to_centers(points: &[Point3], centers: &[Point3]) -> Result<Vec<usize>> {
    let index = NnIndex::build(centers)?;
    Ok(points
        .par_iter()
        .map(|p| index.nearest(p).unwrap().index)
        .collect())
}

pub fn encode_features(fs: &FeatureSet) -> Vec<u8> {
    let m = fs.patch_count();
    let mut out = Vec::with_capacity(12 + 4 * (m * fs.dim() + 3 * m));
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(m as u32).to_le_bytes());
    out.extend_from_slice(&(fs.dim() as u32).to_le_bytes());
    for v in fs.local() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    for c in fs.centers() {
        for v in c {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_features(bytes: &[u8], extractor_id: &str) -> Result<FeatureSet> {
    if bytes.len() < 4 {
        return Err(GlfmError::parse_byte(bytes.len(), "file too short for magic"));
    }
    if &bytes[..4] != FEATURE_MAGIC {
        return Err(GlfmError::parse_byte(0, "bad magic, expected GFT1"));
    }
    if bytes.len() < 12 {
        return Err(GlfmError::parse_byte(bytes.len(), "file too short for header"));
    }
    let m = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if m == 0 || d == 0 {
        return Err(GlfmError::parse_byte(4, format!("invalid shape M={m} D={d}")));
    }
    let expected = 12 + 4 * (m * d + 3 * m);
    if bytes.len() < expected {
        // first byte of the first incomplete value
        let complete = (bytes.len() - 12) / 4;
        return Err(GlfmError::parse_byte(
            12 + 4 * complete,
            format!("truncated: header declares {expected} bytes, file has {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(GlfmError::parse_byte(expected, "trailing bytes after declared data"));
    }
    let read = |k: usize| f32::from_le_bytes(bytes[12 + 4 * k..16 + 4 * k].try_into().unwrap()) as f64;
    let mut local = Vec::with_capacity(m * d);
    for k in 0..m * d {
        let v = read(k);
        if !v.is_finite() {
            return Err(GlfmError::parse_byte(12 + 4 * k, "non-finite feature value"));
        }
        local.push(v);
    }
    let mut centers = Vec::with_capacity(m);
    for i in 0..m {
        let base = m * d + 3 * i;
        let c = [read(base), read(base + 1), read(base + 2)];
        if c.iter().any(|v| !v.is_finite()) {
            return Err(GlfmError::parse_byte(12 + 4 * base, "non-finite patch center"));
        }
        centers.push(c);
    }
    FeatureSet::new(centers, local, d, extractor_id)
}

pub fn save_features(fs: &FeatureSet, path: &Path) -> Result<()> {
    fs::write(path, encode_features(fs)).map_err(|e| GlfmError::io(path, e))
}

/// Loads a GLFM-FEAT file. The global feature is recomputed from the rows.
pub fn load_external_features(path: &Path) -> Result<FeatureSet> {
    let bytes = fs::read(path).map_err(|e| GlfmError::io(path, e))?;
    decode_features(&bytes, "external")
}

/// Loads a GLFM-FEAT file produced by this crate's extractor, keeping its id.
pub fn load_features_as(path: &Path, extractor_id: &str) -> Result<FeatureSet> {
    let bytes = fs::read(path).map_err(|e| GlfmError::io(path, e))?;
    decode_features(&bytes, extractor_id)
}

/// Smallest pairwise distance between distinct centers, per center; used as
/// the spacing scale for smoothing.
pub fn center_spacing(centers: &[Point3]) -> f64 {
    if centers.len() < 2 {
        return 0.0;
    }
    let mut d: Vec<f64> = centers
        .iter()
        .enumerate()
        .map(|(i, a)| {
            centers
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| dist(a, b))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    median(&mut d)
}
