//! Object-wise AUROC, point-wise AUROC and point-wise AUPRO over 3D regions.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cloud::Point3;
use crate::error::{GlfmError, Result};
use crate::features::median_spacing;
use crate::nn::NnIndex;

pub const DEFAULT_FPR_LIMIT: f64 = 0.3;
pub const DEFAULT_REGION_RADIUS_FACTOR: f64 = 2.0;

fn check_scores(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(GlfmError::DimensionMismatch {
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(GlfmError::InvalidInput("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    Ok((pos, neg))
}

/// Indices sorted by descending score.
fn order_desc(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    order
}

/// Area under the ROC curve as the normalized Mann-Whitney statistic:
/// P(score_pos > score_neg) + P(tie) / 2.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_scores(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(GlfmError::InvalidInput("AUROC needs both positive and negative labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // Count (pos above neg) pairs tie group by tie group, in integers.
    let mut wins2: u128 = 0; // twice the U statistic
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut gp, mut gn) = (0u128, 0u128);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        wins2 += gp * (2 * neg_below + gn);
        neg_below += gn;
        i = j;
    }
    Ok(wins2 as f64 / (2.0 * pos as f64 * neg as f64))
}

/// ROC curve points `(fpr, tpr)` from (0, 0) to (1, 1), one per distinct score.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = check_scores(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(GlfmError::InvalidInput("ROC needs both classes".into()));
    }
    let order = order_desc(scores);
    let mut curve = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(curve)
}

/// Connected components of the mask-positive points, with edges between
/// points at most `radius` apart. Region ids are dense from 0 and ordered by
/// each region's smallest point index; negatives get `None`.
pub fn connected_regions(points: &[Point3], mask: &[bool], radius: f64) -> Result<Vec<Option<usize>>> {
    if mask.len() != points.len() {
        return Err(GlfmError::InvalidInput("mask length differs from point count".into()));
    }
    if !(radius > 0.0) {
        return Err(GlfmError::InvalidInput("region radius must be positive".into()));
    }
    let positives: Vec<usize> = (0..points.len()).filter(|&i| mask[i]).collect();
    let mut out = vec![None; points.len()];
    if positives.is_empty() {
        return Ok(out);
    }
    let sub: Vec<Point3> = positives.iter().map(|&i| points[i]).collect();
    let index = NnIndex::build(&sub)?;
    let mut parent: Vec<usize> = (0..sub.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (a, p) in sub.iter().enumerate() {
        for nb in index.within(p, radius)? {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, nb.index));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut ids = BTreeMap::new();
    for (a, &orig) in positives.iter().enumerate() {
        let root = find(&mut parent, a);
        let next = ids.len();
        let id = *ids.entry(root).or_insert(next);
        out[orig] = Some(id);
    }
    Ok(out)
}

/// Per-region-overlap curve `(fpr, pro)` starting at (0, 0), one point per
/// distinct score (descending thresholds, `score >= t` counts as detected).
pub fn pro_curve(scores: &[f64], regions: &[Option<usize>], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (_, neg) = check_scores(scores, labels)?;
    if regions.len() != scores.len() {
        return Err(GlfmError::InvalidInput("region ids do not match scores".into()));
    }
    let n_regions = regions.iter().flatten().max().map_or(0, |m| m + 1);
    if n_regions == 0 {
        return Err(GlfmError::InvalidInput("PRO needs at least one region".into()));
    }
    if neg == 0 {
        return Err(GlfmError::InvalidInput("PRO needs negative points".into()));
    }
    let mut size = vec![0usize; n_regions];
    for r in regions.iter().flatten() {
        size[*r] += 1;
    }
    let order = order_desc(scores);
    let mut curve = vec![(0.0, 0.0)];
    let mut overlap_sum = 0.0;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            let p = order[i];
            if let Some(r) = regions[p] {
                overlap_sum += 1.0 / size[r] as f64;
            }
            if !labels[p] {
                fp += 1;
            }
            i += 1;
        }
        curve.push((fp as f64 / neg as f64, overlap_sum / n_regions as f64));
    }
    Ok(curve)
}

/// Trapezoid area under `curve` for x in [0, limit], divided by `limit`.
pub fn normalized_area(curve: &[(f64, f64)], limit: f64) -> f64 {
    let mut area = 0.0;
    for w in curve.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if x0 >= limit {
            break;
        }
        if x1 <= limit {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            let y_lim = y0 + (y1 - y0) * (limit - x0) / (x1 - x0);
            area += (limit - x0) * (y0 + y_lim) / 2.0;
            break;
        }
    }
    area / limit
}

/// Area under the PRO curve up to `fpr_limit`, normalized to [0, 1].
pub fn aupro(scores: &[f64], regions: &[Option<usize>], labels: &[bool], fpr_limit: f64) -> Result<f64> {
    if !(fpr_limit > 0.0 && fpr_limit <= 1.0) {
        return Err(GlfmError::InvalidInput("fpr_limit must lie in (0, 1]".into()));
    }
    let curve = pro_curve(scores, regions, labels)?;
    Ok(normalized_area(&curve, fpr_limit).clamp(0.0, 1.0))
}

/// Per-class min-max normalization; a constant class maps to 0.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    values
        .iter()
        .map(|v| if range > 0.0 { (v - lo) / range } else { 0.0 })
        .collect()
}

/// One evaluated test sample.
#[derive(Debug, Clone)]
pub struct EvalSample {
    pub id: String,
    pub class: String,
    pub points: Vec<Point3>,
    pub point_scores: Vec<f64>,
    pub object_score: f64,
    /// Ground-truth point mask; `None` means all normal.
    pub mask: Option<Vec<bool>>,
}

impl EvalSample {
    pub fn is_anomalous(&self) -> bool {
        self.mask.as_ref().map_or(false, |m| m.iter().any(|&v| v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub samples: usize,
    pub anomalous: usize,
    pub o_roc: Option<f64>,
    pub p_roc: Option<f64>,
    pub p_pro: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub o_roc: Option<f64>,
    pub p_roc: Option<f64>,
    pub p_pro: Option<f64>,
    pub fpr_limit: f64,
    pub per_class: Vec<ClassReport>,
    #[serde(skip)]
    pub o_roc_curve: Vec<(f64, f64)>,
    #[serde(skip)]
    pub p_roc_curve: Vec<(f64, f64)>,
    #[serde(skip)]
    pub pro_curve: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub fpr_limit: f64,
    /// Region radius as a multiple of each cloud's median 1-NN spacing.
    pub region_radius_factor: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            fpr_limit: DEFAULT_FPR_LIMIT,
            region_radius_factor: DEFAULT_REGION_RADIUS_FACTOR,
        }
    }
}

struct Pooled {
    obj_scores: Vec<f64>,
    obj_labels: Vec<bool>,
    pt_scores: Vec<f64>,
    pt_labels: Vec<bool>,
    regions: Vec<Option<usize>>,
}

fn pool(samples: &[&EvalSample], opts: &EvalOptions) -> Result<Pooled> {
    let mut p = Pooled {
        obj_scores: Vec::new(),
        obj_labels: Vec::new(),
        pt_scores: Vec::new(),
        pt_labels: Vec::new(),
        regions: Vec::new(),
    };
    let mut region_offset = 0;
    for s in samples {
        if s.point_scores.len() != s.points.len() {
            return Err(GlfmError::InvalidInput(format!("sample '{}' has mismatched score count", s.id)));
        }
        p.obj_scores.push(s.object_score);
        p.obj_labels.push(s.is_anomalous());
        p.pt_scores.extend_from_slice(&s.point_scores);
        match &s.mask {
            Some(m) => {
                if m.len() != s.points.len() {
                    return Err(GlfmError::InvalidInput(format!("sample '{}' has mismatched mask", s.id)));
                }
                p.pt_labels.extend_from_slice(m);
                if m.iter().any(|&v| v) {
                    let index = NnIndex::build(&s.points)?;
                    let radius = opts.region_radius_factor * median_spacing(&s.points, &index);
                    let radius = if radius > 0.0 { radius } else { f64::MIN_POSITIVE };
                    let ids = connected_regions(&s.points, m, radius)?;
                    let count = ids.iter().flatten().max().map_or(0, |x| x + 1);
                    p.regions.extend(ids.into_iter().map(|r| r.map(|r| r + region_offset)));
                    region_offset += count;
                } else {
                    p.regions.extend(std::iter::repeat(None).take(m.len()));
                }
            }
            None => {
                p.pt_labels.extend(std::iter::repeat(false).take(s.points.len()));
                p.regions.extend(std::iter::repeat(None).take(s.points.len()));
            }
        }
    }
    Ok(p)
}

fn both_classes(labels: &[bool]) -> bool {
    labels.iter().any(|&l| l) && labels.iter().any(|&l| !l)
}

/// Metrics over all samples and per class. A metric is `None` when it is
/// undefined (single-class labels).
pub fn evaluate(samples: &[EvalSample], opts: &EvalOptions) -> Result<EvalReport> {
    let all: Vec<&EvalSample> = samples.iter().collect();
    let pooled = pool(&all, opts)?;
    let metric = |p: &Pooled| -> Result<(Option<f64>, Option<f64>, Option<f64>)> {
        let o = if both_classes(&p.obj_labels) {
            Some(auroc(&p.obj_scores, &p.obj_labels)?)
        } else {
            None
        };
        let (pr, pp) = if both_classes(&p.pt_labels) {
            (
                Some(auroc(&p.pt_scores, &p.pt_labels)?),
                Some(aupro(&p.pt_scores, &p.regions, &p.pt_labels, opts.fpr_limit)?),
            )
        } else {
            (None, None)
        };
        Ok((o, pr, pp))
    };
    let (o_roc, p_roc, p_pro) = metric(&pooled)?;

    let mut classes: Vec<&str> = samples.iter().map(|s| s.class.as_str()).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut per_class = Vec::new();
    for c in classes {
        let subset: Vec<&EvalSample> = samples.iter().filter(|s| s.class == c).collect();
        let p = pool(&subset, opts)?;
        let (o, pr, pp) = metric(&p)?;
        per_class.push(ClassReport {
            class: c.to_string(),
            samples: subset.len(),
            anomalous: subset.iter().filter(|s| s.is_anomalous()).count(),
            o_roc: o,
            p_roc: pr,
            p_pro: pp,
        });
    }

    let o_roc_curve = if o_roc.is_some() {
        roc_curve(&pooled.obj_scores, &pooled.obj_labels)?
    } else {
        Vec::new()
    };
    let (p_roc_curve, pro) = if p_roc.is_some() {
        (
            roc_curve(&pooled.pt_scores, &pooled.pt_labels)?,
            pro_curve(&pooled.pt_scores, &pooled.regions, &pooled.pt_labels)?,
        )
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(EvalReport {
        o_roc,
        p_roc,
        p_pro,
        fpr_limit: opts.fpr_limit,
        per_class,
        o_roc_curve,
        p_roc_curve,
        pro_curve: pro,
    })
}

/// Writes `class,score,label` rows with scores min-max normalized per class.
pub fn score_distribution_dump(samples: &[EvalSample], path: &Path) -> Result<usize> {
    let mut by_class: BTreeMap<&str, Vec<&EvalSample>> = BTreeMap::new();
    for s in samples {
        by_class.entry(s.class.as_str()).or_default().push(s);
    }
    let mut out = Vec::new();
    writeln!(out, "class,score,label").unwrap();
    let mut rows = 0;
    for (class, group) in by_class {
        let scores: Vec<f64> = group.iter().flat_map(|s| s.point_scores.iter().copied()).collect();
        let labels: Vec<bool> = group
            .iter()
            .flat_map(|s| match &s.mask {
                Some(m) => m.clone(),
                None => vec![false; s.point_scores.len()],
            })
            .collect();
        for (v, l) in min_max_normalize(&scores).into_iter().zip(labels) {
            writeln!(out, "{class},{v},{}", l as u8).unwrap();
            rows += 1;
        }
    }
    fs::write(path, out).map_err(|e| GlfmError::io(path, e))?;
    Ok(rows)
}

pub fn write_curve_csv(curve: &[(f64, f64)], header: &str, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "{header}").unwrap();
    for (x, y) in curve {
        writeln!(out, "{x},{y}").unwrap();
    }
    fs::write(path, out).map_err(|e| GlfmError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert!(auroc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn regions_examples() {
        let pts: Vec<Point3> = vec![[0.0; 3], [0.1, 0.0, 0.0], [5.0, 0.0, 0.0], [5.1, 0.0, 0.0], [2.0, 0.0, 0.0]];
        let ids = connected_regions(&pts, &[true, true, true, true, false], 0.5).unwrap();
        assert_eq!(ids, vec![Some(0), Some(0), Some(1), Some(1), None]);
        let one = connected_regions(&pts, &[false, false, false, false, true], 0.5).unwrap();
        assert_eq!(one, vec![None, None, None, None, Some(0)]);
        let none = connected_regions(&pts, &[false; 5], 0.5).unwrap();
        assert!(none.iter().all(Option::is_none));
    }

    #[test]
    fn aupro_perfect_and_inverted() {
        let labels = [true, true, false, false, true, false];
        let regions = [Some(0), Some(0), None, None, Some(1), None];
        let perfect: Vec<f64> = labels.iter().map(|&l| l as u8 as f64).collect();
        assert_eq!(aupro(&perfect, &regions, &labels, 0.3).unwrap(), 1.0);
        let inverted: Vec<f64> = perfect.iter().map(|v| 1.0 - v).collect();
        assert_eq!(aupro(&inverted, &regions, &labels, 0.3).unwrap(), 0.0);
        assert!(aupro(&perfect, &[None; 6], &labels, 0.3).is_err());
    }

    #[test]
    fn min_max_examples() {
        assert_eq!(min_max_normalize(&[0.0, 5.0, 10.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(min_max_normalize(&[3.0, 3.0]), vec![0.0, 0.0]);
    }
}
