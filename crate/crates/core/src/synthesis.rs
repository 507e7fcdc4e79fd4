//! Anomaly synthesis: protrusions and depressions made by stretching a
//! reference point's neighborhood along its surface normal.
//!
//! For one defect with reference point `r`:
//!
//! 1. the normal `n_r` comes from PCA over the `k_normal` nearest neighbors;
//! 2. the `C` nearest neighbors of `r` are searched in coordinates scaled by
//!    per-axis weights `(dx, dy, dz)`;
//! 3. the local density `rho_r` is the distance between the first and second
//!    nearest neighbors of `r`, and the total stretch is `D_r = rho_r * C`;
//! 4. the neighbor of rank `j` moves by `dir * n_r * D_r * j / C` in the
//!    original coordinates (`(C + 1 - j) / C` with [`Ramp::Inverted`]).

use serde::{Deserialize, Serialize};

use crate::cloud::{centroid, dist, Point3, PointCloud};
use crate::error::{GlfmError, Result};
use crate::nn::NnIndex;
use crate::normals::{neighbors_excluding, orient_outward, pca_normal, NormalEstimate};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Ramp {
    /// Offset grows with neighbor rank (`j / C`).
    #[default]
    Literal,
    /// Offset shrinks with neighbor rank (`(C + 1 - j) / C`).
    Inverted,
}

impl Ramp {
    pub fn factor(self, rank: usize, count: usize) -> f64 {
        match self {
            Ramp::Literal => rank as f64 / count as f64,
            Ramp::Inverted => (count + 1 - rank) as f64 / count as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub k_normal: usize,
    pub c_frac_range: (f64, f64),
    pub axis_weight_range: (f64, f64),
    pub protrusion_prob: f64,
    pub defects_per_cloud: usize,
    pub ramp: Ramp,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            k_normal: 16,
            c_frac_range: (0.01, 0.02),
            axis_weight_range: (0.8, 1.2),
            protrusion_prob: 0.5,
            defects_per_cloud: 1,
            ramp: Ramp::Literal,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        let range_ok = |(lo, hi): (f64, f64)| lo > 0.0 && lo <= hi && hi.is_finite();
        if !range_ok(self.c_frac_range) {
            return Err(GlfmError::InvalidInput(format!("bad c_frac_range {:?}", self.c_frac_range)));
        }
        if !range_ok(self.axis_weight_range) {
            return Err(GlfmError::InvalidInput(format!(
                "bad axis_weight_range {:?}",
                self.axis_weight_range
            )));
        }
        if !(0.0..=1.0).contains(&self.protrusion_prob) {
            return Err(GlfmError::InvalidInput("protrusion_prob must lie in [0, 1]".into()));
        }
        if self.k_normal < 3 {
            return Err(GlfmError::InvalidInput("k_normal must be at least 3".into()));
        }
        if self.defects_per_cloud == 0 {
            return Err(GlfmError::InvalidInput("defects_per_cloud must be positive".into()));
        }
        Ok(())
    }
}

/// The randomly drawn quantities of one defect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefectParams {
    pub reference: usize,
    pub count: usize,
    pub weights: [f64; 3],
    /// +1 protrusion, -1 depression.
    pub dir: i8,
}

/// Everything needed to replay or audit one applied defect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectRecord {
    pub params: DefectParams,
    pub ramp: Ramp,
    pub normal: Point3,
    pub degenerate_normal: bool,
    pub rho: f64,
    pub total_distance: f64,
    /// Displaced point indices in neighbor-rank order (rank 1 first).
    pub displaced: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_id: String,
    pub seed: u64,
    pub k_normal: usize,
    pub defects: Vec<DefectRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    /// Stretched cloud; its mask equals `mask`.
    pub cloud: PointCloud,
    pub mask: Vec<bool>,
    pub provenance: Provenance,
}

fn check_reference(n: usize, reference: usize) -> Result<()> {
    if reference >= n {
        return Err(GlfmError::InvalidInput(format!("reference index {reference} out of range for {n} points")));
    }
    Ok(())
}

fn normal_with_index(points: &[Point3], index: &NnIndex, reference: usize, k_normal: usize) -> NormalEstimate {
    let nb: Vec<usize> = neighbors_excluding(index, points, reference, k_normal)
        .iter()
        .map(|n| n.index)
        .collect();
    let est = pca_normal(points, &nb);
    if est.degenerate {
        est
    } else {
        NormalEstimate {
            normal: orient_outward(est.normal, &points[reference], &centroid(points)),
            degenerate: false,
        }
    }
}

/// Unit normal at `reference`, oriented away from the cloud centroid.
/// Degenerate neighborhoods yield +z with `degenerate` set.
pub fn estimate_normal(cloud: &PointCloud, reference: usize, k_normal: usize) -> Result<NormalEstimate> {
    check_reference(cloud.len(), reference)?;
    if cloud.len() <= k_normal {
        return Err(GlfmError::InvalidInput(format!(
            "normal estimation needs more than {k_normal} points, cloud has {}",
            cloud.len()
        )));
    }
    let index = NnIndex::build(cloud.points())?;
    Ok(normal_with_index(cloud.points(), &index, reference, k_normal))
}

fn density_with_index(points: &[Point3], index: &NnIndex, reference: usize) -> f64 {
    let nb = neighbors_excluding(index, points, reference, 2);
    dist(&points[nb[0].index], &points[nb[1].index])
}

/// Distance between the first and second nearest neighbors of `reference`.
pub fn local_density(cloud: &PointCloud, reference: usize) -> Result<f64> {
    check_reference(cloud.len(), reference)?;
    if cloud.len() < 3 {
        return Err(GlfmError::InvalidInput("local density needs at least 3 points".into()));
    }
    let index = NnIndex::build(cloud.points())?;
    Ok(density_with_index(cloud.points(), &index, reference))
}

/// Applies one defect in place and reports what was done.
pub fn apply_defect(points: &mut [Point3], params: DefectParams, k_normal: usize, ramp: Ramp) -> Result<DefectRecord> {
    let n = points.len();
    check_reference(n, params.reference)?;
    if n <= k_normal || n < 3 {
        return Err(GlfmError::InvalidInput(format!(
            "defect needs more than max({k_normal}, 2) points, cloud has {n}"
        )));
    }
    if params.count == 0 || params.count >= n {
        return Err(GlfmError::InvalidInput(format!("stretch count {} must be in 1..{n}", params.count)));
    }
    if params.dir != 1 && params.dir != -1 {
        return Err(GlfmError::InvalidInput("dir must be +1 or -1".into()));
    }
    if params.weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(GlfmError::InvalidInput("axis weights must be positive".into()));
    }

    let index = NnIndex::build(points)?;
    let est = normal_with_index(points, &index, params.reference, k_normal);
    let rho = density_with_index(points, &index, params.reference);

    let [dx, dy, dz] = params.weights;
    let scaled: Vec<Point3> = points.iter().map(|p| [p[0] * dx, p[1] * dy, p[2] * dz]).collect();
    let scaled_index = NnIndex::build(&scaled)?;
    let displaced: Vec<usize> = neighbors_excluding(&scaled_index, &scaled, params.reference, params.count)
        .iter()
        .map(|n| n.index)
        .collect();

    let total = rho * params.count as f64;
    let dir = params.dir as f64;
    for (rank0, &i) in displaced.iter().enumerate() {
        let t = dir * (total * ramp.factor(rank0 + 1, params.count));
        for k in 0..3 {
            points[i][k] += est.normal[k] * t;
        }
    }

    Ok(DefectRecord {
        params,
        ramp,
        normal: est.normal,
        degenerate_normal: est.degenerate,
        rho,
        total_distance: total,
        displaced,
    })
}

/// Draws the parameters of one defect. Draw order is fixed: reference,
/// count, dx, dy, dz, direction.
pub fn draw_defect(n: usize, cfg: &SynthesisConfig, rng: &mut SeededRng) -> DefectParams {
    let reference = rng.below(n);
    let (lo, hi) = cfg.c_frac_range;
    let c = rng.uniform(lo * n as f64, hi * n as f64).round() as usize;
    let count = c.clamp(1, n - 1);
    let (wlo, whi) = cfg.axis_weight_range;
    let weights = [rng.uniform(wlo, whi), rng.uniform(wlo, whi), rng.uniform(wlo, whi)];
    let dir = if rng.bernoulli(cfg.protrusion_prob) { 1 } else { -1 };
    DefectParams {
        reference,
        count,
        weights,
        dir,
    }
}

/// Fabricates `defects_per_cloud` defects on a copy of `cloud`, applied
/// sequentially with OR-ed masks.
pub fn synthesize_anomaly(cloud: &PointCloud, cfg: &SynthesisConfig, rng: &mut SeededRng) -> Result<SyntheticSample> {
    cfg.validate()?;
    let n = cloud.len();
    let needed = (cfg.k_normal + 1).max((cfg.c_frac_range.1 * n as f64).ceil() as usize).max(3);
    if n < needed {
        return Err(GlfmError::InvalidInput(format!(
            "cloud '{}' has {n} points, synthesis needs at least {needed}",
            cloud.id()
        )));
    }
    let seed = rng.seed();
    let mut points = cloud.points().to_vec();
    let mut mask = vec![false; n];
    let mut defects = Vec::with_capacity(cfg.defects_per_cloud);
    for _ in 0..cfg.defects_per_cloud {
        let params = draw_defect(n, cfg, rng);
        let rec = apply_defect(&mut points, params, cfg.k_normal, cfg.ramp)?;
        for &i in &rec.displaced {
            mask[i] = true;
        }
        defects.push(rec);
    }
    let out = PointCloud::new(cloud.id(), points, Some(mask.clone()))?;
    Ok(SyntheticSample {
        cloud: out,
        mask,
        provenance: Provenance {
            source_id: cloud.id().to_string(),
            seed,
            k_normal: cfg.k_normal,
            defects,
        },
    })
}

/// Re-applies recorded defects to the source cloud.
pub fn replay(source: &PointCloud, provenance: &Provenance) -> Result<SyntheticSample> {
    let mut points = source.points().to_vec();
    let mut mask = vec![false; points.len()];
    let mut defects = Vec::with_capacity(provenance.defects.len());
    for d in &provenance.defects {
        let rec = apply_defect(&mut points, d.params, provenance.k_normal, d.ramp)?;
        for &i in &rec.displaced {
            mask[i] = true;
        }
        defects.push(rec);
    }
    Ok(SyntheticSample {
        cloud: PointCloud::new(source.id(), points, Some(mask.clone()))?,
        mask,
        provenance: Provenance {
            defects,
            ..provenance.clone()
        },
    })
}
