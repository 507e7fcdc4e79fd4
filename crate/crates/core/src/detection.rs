//! Inference: route by global feature, score patches against the routed
//! bank, spread patch scores to points, take the maximum as object score.

use serde::{Deserialize, Serialize};

use crate::adaptation::{predict_patch_logits, SegHead};
use crate::bank::{assign_cluster, FusionStats, GlfmModel};
use crate::cloud::{Point3, PointCloud};
use crate::error::{GlfmError, Result};
use crate::features::{center_spacing, FeatureSet};
use crate::nn::NnIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Smoothing {
    /// Each point takes its nearest center's score.
    #[default]
    Nearest,
    /// Gaussian-weighted mean over the three nearest centers.
    Gauss3,
}

#[derive(Debug, Clone, Copy)]
pub struct Fusion<'a> {
    pub head: &'a SegHead,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DetectOptions<'a> {
    pub smoothing: Smoothing,
    pub fusion: Option<Fusion<'a>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyResult {
    pub point_scores: Vec<f64>,
    pub object_score: f64,
    pub routed_idx: usize,
    /// Distance of each patch to its nearest bank vector.
    pub patch_scores: Vec<f64>,
    pub fused_scores: Option<Vec<f64>>,
}

/// A model with one search index per local bank, reusable across clouds.
pub struct Detector<'m> {
    model: &'m GlfmModel,
    indexes: Vec<NnIndex>,
}

impl<'m> Detector<'m> {
    pub fn new(model: &'m GlfmModel) -> Result<Self> {
        model.validate()?;
        let indexes = model
            .banks
            .iter()
            .map(|b| NnIndex::from_flat(b.vectors.clone(), model.dim))
            .collect::<Result<_>>()?;
        Ok(Self { model, indexes })
    }

    pub fn model(&self) -> &GlfmModel {
        self.model
    }

    /// Scores `cloud` given its (raw, unnormalized) features.
    pub fn detect(&self, cloud: &PointCloud, features: &FeatureSet, opts: &DetectOptions<'_>) -> Result<AnomalyResult> {
        if cloud.is_empty() {
            return Err(GlfmError::InvalidInput(format!("cloud '{}' is empty", cloud.id())));
        }
        if features.dim() != self.model.dim {
            return Err(GlfmError::DimensionMismatch {
                expected: self.model.dim,
                actual: features.dim(),
            });
        }
        if features.extractor_id != self.model.extractor_id {
            return Err(GlfmError::Model(format!(
                "features come from extractor '{}' but the model was built with '{}'",
                features.extractor_id, self.model.extractor_id
            )));
        }
        let prepared = self.model.prepare(features);
        let routed_idx = assign_cluster(prepared.global(), &self.model.centers)?;
        let index = &self.indexes[routed_idx];
        let patch_scores: Vec<f64> = prepared
            .rows()
            .map(|r| index.nearest(r).map(|n| n.distance))
            .collect::<Result<_>>()?;

        let fused_scores = match opts.fusion {
            Some(f) if f.lambda != 0.0 => {
                let stats = self.model.fusion.ok_or_else(|| {
                    GlfmError::Model("score fusion requested but the model has no fusion statistics".into())
                })?;
                let logits = predict_patch_logits(f.head, features)?;
                Some(fuse(&patch_scores, &logits, &stats, f.lambda))
            }
            _ => None,
        };
        let used = fused_scores.as_deref().unwrap_or(&patch_scores);
        let point_scores = propagate_to_points(used, features.centers(), cloud, opts.smoothing)?;
        let object_score = point_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(AnomalyResult {
            point_scores,
            object_score,
            routed_idx,
            patch_scores,
            fused_scores,
        })
    }
}

/// `(1 - lambda) * z(distance) + lambda * z(logit)`, shifted so the result
/// is non-negative.
fn fuse(dists: &[f64], logits: &[f64], s: &FusionStats, lambda: f64) -> Vec<f64> {
    let raw: Vec<f64> = dists
        .iter()
        .zip(logits)
        .map(|(d, l)| (1.0 - lambda) * (d - s.dist_mean) / s.dist_std + lambda * (l - s.logit_mean) / s.logit_std)
        .collect();
    // point scores must be >= 0; shift by a constant so ranking is unchanged
    let floor = raw.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    raw.into_iter().map(|v| v - floor).collect()
}

/// Convenience wrapper building a [`Detector`] for a single cloud.
pub fn detect(cloud: &PointCloud, model: &GlfmModel, features: &FeatureSet, opts: &DetectOptions<'_>) -> Result<AnomalyResult> {
    Detector::new(model)?.detect(cloud, features, opts)
}

/// Spreads patch scores onto points.
pub fn propagate_to_points(patch_scores: &[f64], centers: &[Point3], cloud: &PointCloud, smoothing: Smoothing) -> Result<Vec<f64>> {
    if patch_scores.is_empty() || patch_scores.len() != centers.len() {
        return Err(GlfmError::InvalidInput(format!(
            "{} patch scores for {} centers",
            patch_scores.len(),
            centers.len()
        )));
    }
    let index = NnIndex::build(centers)?;
    let k = match smoothing {
        Smoothing::Nearest => 1,
        Smoothing::Gauss3 => centers.len().min(3),
    };
    let sigma = if k > 1 { center_spacing(centers) } else { 0.0 };
    let two_s2 = 2.0 * sigma * sigma;
    let out = cloud
        .points()
        .iter()
        .map(|p| {
            let nb = index.knn(p, k).unwrap();
            if k == 1 || !(two_s2 > 0.0) {
                return patch_scores[nb[0].index];
            }
            let mut wsum = 0.0;
            let mut acc = 0.0;
            for n in &nb {
                let w = (-n.distance * n.distance / two_s2).exp();
                wsum += w;
                acc += w * patch_scores[n.index];
            }
            if wsum > 0.0 {
                acc / wsum
            } else {
                patch_scores[nb[0].index]
            }
        })
        .collect();
    Ok(out)
}

/// Fusion statistics from training features: nearest-bank distances of the
/// routed local rows and head logits of the raw rows.
pub fn calibrate_fusion(model: &GlfmModel, head: &SegHead, train: &[FeatureSet]) -> Result<FusionStats> {
    let det = Detector::new(model)?;
    let mut dists = Vec::new();
    let mut logits = Vec::new();
    for fs in train {
        let prepared = model.prepare(fs);
        let idx = assign_cluster(prepared.global(), &model.centers)?;
        for r in prepared.rows() {
            dists.push(det.indexes[idx].nearest(r)?.distance);
        }
        logits.extend(predict_patch_logits(head, fs)?);
    }
    let stats = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let s = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt();
        (m, if s > 1e-12 { s } else { 1.0 })
    };
    if dists.is_empty() {
        return Err(GlfmError::InvalidInput("no training rows for fusion calibration".into()));
    }
    let (dist_mean, dist_std) = stats(&dists);
    let (logit_mean, logit_std) = stats(&logits);
    Ok(FusionStats {
        dist_mean,
        dist_std,
        logit_mean,
        logit_std,
    })
}
