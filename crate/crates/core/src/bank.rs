//! Global-local memory banks.
//!
//! Global features of all training samples are clustered with k-means; the
//! cluster centers form the global bank. Each sample's local rows go to the
//! bank of its nearest center, and every bank is then thinned to a greedy
//! k-center coreset.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GlfmError, Result};
use crate::features::FeatureSet;
use crate::rng::SeededRng;

pub const DEFAULT_CORESET_FRACTION: f64 = 0.1;
pub const DEFAULT_KMEANS_ITERS: usize = 100;
const MODEL_MAGIC: &[u8; 4] = b"GLFM";
const MODEL_VERSION: u32 = 1;

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Index of the nearest center; ties go to the smaller index.
pub fn assign_cluster(global: &[f64], centers: &[Vec<f64>]) -> Result<usize> {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        if c.len() != global.len() {
            return Err(GlfmError::DimensionMismatch {
                expected: c.len(),
                actual: global.len(),
            });
        }
        let d = sq_dist(global, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    if centers.is_empty() {
        return Err(GlfmError::InvalidInput("no cluster centers".into()));
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centers: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squares after each center update.
    pub sse_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn kmeans_pp_init(points: &[Vec<f64>], k: usize, rng: &mut SeededRng) -> Vec<usize> {
    let n = points.len();
    let mut chosen = vec![rng.below(n)];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let r = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                acc += d;
                if acc > r {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave r at the very end of the cumulative sum
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            (0..n).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
        for (d, p) in d2.iter_mut().zip(points) {
            let nd = sq_dist(p, &points[next]);
            if nd < *d {
                *d = nd;
            }
        }
    }
    chosen
}

fn assign_all(points: &[Vec<f64>], centers: &[Vec<f64>]) -> Vec<usize> {
    points
        .iter()
        .map(|p| assign_cluster(p, centers).unwrap())
        .collect()
}

fn sse(points: &[Vec<f64>], centers: &[Vec<f64>], assignment: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| sq_dist(p, &centers[a]))
        .sum()
}

/// k-means with k-means++ seeding and Lloyd iterations until the assignment
/// stops changing or `max_iters` updates have run. A cluster that empties
/// takes the point farthest from its own center.
pub fn kmeans(points: &[Vec<f64>], k: usize, max_iters: usize, rng: &mut SeededRng) -> Result<KMeansResult> {
    let n = points.len();
    if n == 0 {
        return Err(GlfmError::InvalidInput("k-means over zero points".into()));
    }
    if k == 0 || k > n {
        return Err(GlfmError::InvalidInput(format!("K = {k} must be in 1..={n}")));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(GlfmError::DimensionMismatch {
            expected: dim,
            actual: p.len(),
        });
    }

    let mut centers: Vec<Vec<f64>> = kmeans_pp_init(points, k, rng)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();
    let mut assignment: Vec<usize> = Vec::new();
    let mut sse_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    loop {
        let next = assign_all(points, &centers);
        if next == assignment {
            converged = true;
            break;
        }
        if iterations == max_iters {
            break;
        }
        assignment = next;

        let mut sizes = vec![0usize; k];
        for &a in &assignment {
            sizes[a] += 1;
        }
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let mut far = None;
            let mut far_d = -1.0;
            for (i, p) in points.iter().enumerate() {
                if sizes[assignment[i]] <= 1 {
                    continue;
                }
                let d = sq_dist(p, &centers[assignment[i]]);
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
            let i = far.expect("K <= N leaves a cluster with two or more points");
            sizes[assignment[i]] -= 1;
            assignment[i] = c;
            sizes[c] = 1;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &a) in points.iter().zip(&assignment) {
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for ((c, mut s), &size) in centers.iter_mut().zip(sums).zip(&sizes) {
            for v in s.iter_mut() {
                *v /= size as f64;
            }
            *c = s;
        }
        iterations += 1;
        sse_trace.push(sse(points, &centers, &assignment));
    }

    // At a fixpoint `assignment` already is the argmin routing; otherwise
    // report the routing against the final centers.
    if !converged {
        assignment = assign_all(points, &centers);
    }
    Ok(KMeansResult {
        centers,
        assignment,
        sse_trace,
        iterations,
        converged,
    })
}

/// Greedy farthest-first k-center selection over row-major `vectors`.
/// The first pick is the row farthest from the centroid; ties go to the
/// smaller index. Returns picks in selection order.
pub fn build_coreset(vectors: &[f64], dim: usize, target: usize) -> Result<Vec<usize>> {
    if dim == 0 || vectors.len() % dim != 0 {
        return Err(GlfmError::InvalidInput("row buffer does not match dimension".into()));
    }
    let n = vectors.len() / dim;
    if target == 0 || target > n {
        return Err(GlfmError::InvalidInput(format!("coreset size {target} must be in 1..={n}")));
    }
    let row = |i: usize| &vectors[i * dim..(i + 1) * dim];
    let mut centroid = vec![0.0; dim];
    for i in 0..n {
        for (c, v) in centroid.iter_mut().zip(row(i)) {
            *c += v;
        }
    }
    for c in &mut centroid {
        *c /= n as f64;
    }
    let argmax = |d: &[f64]| {
        let mut best = 0;
        let mut best_d = f64::NEG_INFINITY;
        for (i, &v) in d.iter().enumerate() {
            if v > best_d {
                best_d = v;
                best = i;
            }
        }
        best
    };
    let from_centroid: Vec<f64> = (0..n).map(|i| sq_dist(row(i), &centroid)).collect();
    let first = argmax(&from_centroid);

    let mut picks = Vec::with_capacity(target);
    picks.push(first);
    let mut min_d: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(first))).collect();
    min_d[first] = f64::NEG_INFINITY;
    while picks.len() < target {
        let next = argmax(&min_d);
        picks.push(next);
        let q = row(next).to_vec();
        min_d.par_iter_mut().enumerate().with_min_len(1024).for_each(|(i, d)| {
            if *d > f64::NEG_INFINITY {
                let nd = sq_dist(&vectors[i * dim..(i + 1) * dim], &q);
                if nd < *d {
                    *d = nd;
                }
            }
        });
        min_d[next] = f64::NEG_INFINITY;
    }
    Ok(picks)
}

/// Coreset size for a bank of `count` rows.
pub fn coreset_target(count: usize, fraction: f64) -> usize {
    ((fraction * count as f64).ceil() as usize).clamp(1, count)
}

/// Per-dimension z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Population statistics over all rows. Zero spread becomes std 1.
    pub fn fit(sets: &[FeatureSet]) -> Normalizer {
        let dim = sets[0].dim();
        let mut count = 0usize;
        let mut mean = vec![0.0; dim];
        for fs in sets {
            for r in fs.rows() {
                count += 1;
                for (m, v) in mean.iter_mut().zip(r) {
                    *m += v;
                }
            }
        }
        for m in &mut mean {
            *m /= count as f64;
        }
        let mut var = vec![0.0; dim];
        for fs in sets {
            for r in fs.rows() {
                for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / count as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Normalizer { mean, std }
    }

    pub fn apply(&self, fs: &FeatureSet) -> FeatureSet {
        fs.map_rows(|row| {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        })
    }
}

/// Training statistics used to z-score detection distances and head logits
/// before fusing them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionStats {
    pub dist_mean: f64,
    pub dist_std: f64,
    pub logit_mean: f64,
    pub logit_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildProvenance {
    pub seed: u64,
    pub kmeans_iterations: usize,
    pub kmeans_converged: bool,
    pub sse_trace: Vec<f64>,
    /// Training samples routed to each center.
    pub cluster_sizes: Vec<usize>,
    /// Local rows per bank before coreset thinning.
    pub routed_rows: Vec<usize>,
    pub sample_routes: Vec<usize>,
}

/// Local memory bank: row-major vectors in coreset selection order.
#[derive(Debug, Clone, PartialEq)]
pub struct Bank {
    pub vectors: Vec<f64>,
}

impl Bank {
    pub fn len(&self, dim: usize) -> usize {
        self.vectors.len() / dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlfmModel {
    pub dim: usize,
    pub centers: Vec<Vec<f64>>,
    pub banks: Vec<Bank>,
    pub normalizer: Option<Normalizer>,
    pub extractor_id: String,
    pub coreset_fraction: f64,
    pub provenance: BuildProvenance,
    pub fusion: Option<FusionStats>,
    /// Free-form annotations (config hash, seed, tool version).
    pub meta: BTreeMap<String, String>,
}

impl GlfmModel {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn bank_sizes(&self) -> Vec<usize> {
        self.banks.iter().map(|b| b.len(self.dim)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers.is_empty() || self.centers.len() != self.banks.len() {
            return Err(GlfmError::Model("model needs K >= 1 centers and one bank per center".into()));
        }
        if self.centers.iter().any(|c| c.len() != self.dim) {
            return Err(GlfmError::Model("center dimension differs from model dimension".into()));
        }
        for (i, b) in self.banks.iter().enumerate() {
            if b.vectors.is_empty() || b.vectors.len() % self.dim != 0 {
                return Err(GlfmError::Model(format!("bank {i} is empty or ragged")));
            }
        }
        if let Some(n) = &self.normalizer {
            if n.mean.len() != self.dim || n.std.len() != self.dim || n.std.iter().any(|s| !(*s > 0.0)) {
                return Err(GlfmError::Model("normalizer is inconsistent".into()));
            }
        }
        Ok(())
    }

    /// Applies the stored normalizer, if any.
    pub fn prepare(&self, fs: &FeatureSet) -> FeatureSet {
        match &self.normalizer {
            Some(n) => n.apply(fs),
            None => fs.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub k: usize,
    pub coreset_fraction: f64,
    pub normalize: bool,
    pub seed: u64,
    pub max_iters: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            k: 1,
            coreset_fraction: DEFAULT_CORESET_FRACTION,
            normalize: false,
            seed: 0,
            max_iters: DEFAULT_KMEANS_ITERS,
        }
    }
}

/// Builds the global bank (k-means centers) and the per-center coreset banks.
pub fn build_model(train: &[FeatureSet], opts: &BuildOptions) -> Result<GlfmModel> {
    if train.is_empty() {
        return Err(GlfmError::InvalidInput("no training features".into()));
    }
    if opts.k == 0 || opts.k > train.len() {
        return Err(GlfmError::InvalidInput(format!(
            "K = {} must be in 1..={} (number of training samples)",
            opts.k,
            train.len()
        )));
    }
    if !(opts.coreset_fraction > 0.0 && opts.coreset_fraction <= 1.0) {
        return Err(GlfmError::InvalidInput("coreset fraction must lie in (0, 1]".into()));
    }
    let dim = train[0].dim();
    let extractor_id = train[0].extractor_id.clone();
    for fs in train {
        if fs.dim() != dim {
            return Err(GlfmError::DimensionMismatch {
                expected: dim,
                actual: fs.dim(),
            });
        }
        if fs.extractor_id != extractor_id {
            return Err(GlfmError::InvalidInput(format!(
                "mixed extractors in training set: '{}' and '{}'",
                extractor_id, fs.extractor_id
            )));
        }
    }

    let normalizer = opts.normalize.then(|| Normalizer::fit(train));
    let prepared: Vec<FeatureSet> = match &normalizer {
        Some(n) => train.par_iter().map(|fs| n.apply(fs)).collect(),
        None => train.to_vec(),
    };
    let globals: Vec<Vec<f64>> = prepared.iter().map(|fs| fs.global().to_vec()).collect();
    let mut rng = SeededRng::new(opts.seed);
    let km = kmeans(&globals, opts.k, opts.max_iters, &mut rng)?;

    let routes: Vec<usize> = globals
        .iter()
        .map(|g| assign_cluster(g, &km.centers))
        .collect::<Result<_>>()?;
    let mut routed: Vec<Vec<f64>> = vec![Vec::new(); opts.k];
    let mut cluster_sizes = vec![0usize; opts.k];
    for (fs, &r) in prepared.iter().zip(&routes) {
        routed[r].extend_from_slice(fs.local());
        cluster_sizes[r] += 1;
    }
    if let Some(c) = cluster_sizes.iter().position(|&s| s == 0) {
        return Err(GlfmError::Model(format!("cluster {c} received no training samples")));
    }
    let routed_rows: Vec<usize> = routed.iter().map(|r| r.len() / dim).collect();

    let banks: Vec<Bank> = routed
        .par_iter()
        .map(|rows| {
            let count = rows.len() / dim;
            let picks = build_coreset(rows, dim, coreset_target(count, opts.coreset_fraction))?;
            let mut vectors = Vec::with_capacity(picks.len() * dim);
            for p in picks {
                vectors.extend_from_slice(&rows[p * dim..(p + 1) * dim]);
            }
            Ok(Bank { vectors })
        })
        .collect::<Result<_>>()?;

    let model = GlfmModel {
        dim,
        centers: km.centers,
        banks,
        normalizer,
        extractor_id,
        coreset_fraction: opts.coreset_fraction,
        provenance: BuildProvenance {
            seed: opts.seed,
            kmeans_iterations: km.iterations,
            kmeans_converged: km.converged,
            sse_trace: km.sse_trace,
            cluster_sizes,
            routed_rows,
            sample_routes: routes,
        },
        fusion: None,
        meta: BTreeMap::new(),
    };
    model.validate()?;
    Ok(model)
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    version: u32,
    k: usize,
    dim: usize,
    coreset_fraction: f64,
    extractor_id: String,
    bank_sizes: Vec<usize>,
    normalizer: Option<Normalizer>,
    fusion: Option<FusionStats>,
    provenance: BuildProvenance,
    meta: BTreeMap<String, String>,
}

/// Serializes a model: `"GLFM" | u32 header length | JSON header | f32 blocks`
/// with the K centers first and then each bank in order. Vectors are stored
/// as little-endian f32.
pub fn encode_model(model: &GlfmModel) -> Vec<u8> {
    let header = ModelHeader {
        version: MODEL_VERSION,
        k: model.k(),
        dim: model.dim,
        coreset_fraction: model.coreset_fraction,
        extractor_id: model.extractor_id.clone(),
        bank_sizes: model.bank_sizes(),
        normalizer: model.normalizer.clone(),
        fusion: model.fusion,
        provenance: model.provenance.clone(),
        meta: model.meta.clone(),
    };
    let json = serde_json::to_vec(&header).expect("model header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    let floats = model.centers.iter().flatten().chain(model.banks.iter().flat_map(|b| b.vectors.iter()));
    for v in floats {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<GlfmModel> {
    if bytes.len() < 8 || &bytes[..4] != MODEL_MAGIC {
        return Err(GlfmError::parse_byte(0, "not a GLFM model file"));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + hlen {
        return Err(GlfmError::parse_byte(bytes.len(), "truncated model header"));
    }
    let header: ModelHeader = serde_json::from_slice(&bytes[8..8 + hlen]).map_err(|e| GlfmError::Parse {
        location: "model header".into(),
        message: e.to_string(),
    })?;
    if header.version != MODEL_VERSION {
        return Err(GlfmError::Model(format!("unsupported model version {}", header.version)));
    }
    if header.bank_sizes.len() != header.k {
        return Err(GlfmError::Model("bank size list does not match K".into()));
    }
    let total = header.k * header.dim + header.bank_sizes.iter().sum::<usize>() * header.dim;
    let body = &bytes[8 + hlen..];
    if body.len() != 4 * total {
        return Err(GlfmError::parse_byte(
            8 + hlen + body.len().min(4 * total),
            format!("model body holds {} bytes, header declares {}", body.len(), 4 * total),
        ));
    }
    let mut vals = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let centers = (0..header.k)
        .map(|_| vals.by_ref().take(header.dim).collect())
        .collect();
    let banks = header
        .bank_sizes
        .iter()
        .map(|&s| Bank {
            vectors: vals.by_ref().take(s * header.dim).collect(),
        })
        .collect();
    let model = GlfmModel {
        dim: header.dim,
        centers,
        banks,
        normalizer: header.normalizer,
        extractor_id: header.extractor_id,
        coreset_fraction: header.coreset_fraction,
        provenance: header.provenance,
        fusion: header.fusion,
        meta: header.meta,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &GlfmModel, path: &Path) -> Result<()> {
    fs::write(path, encode_model(model)).map_err(|e| GlfmError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<GlfmModel> {
    let bytes = fs::read(path).map_err(|e| GlfmError::io(path, e))?;
    decode_model(&bytes)
}
