//! Segmentation head trained on synthetic anomalies with soft-IoU + focal
//! loss.
//!
//! The head maps one local feature row to an anomaly probability. With no
//! hidden layer it is linear-logistic; with `hidden > 0` it is a two-layer
//! network with a tanh hidden layer.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{GlfmError, Result};
use crate::features::{assign_to_centers, FeatureSet};
use crate::rng::SeededRng;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` inside the losses.
pub const PROB_EPS: f64 = 1e-7;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn check_pair(probs: &[f64], labels: &[bool]) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(GlfmError::DimensionMismatch {
            expected: labels.len(),
            actual: probs.len(),
        });
    }
    if probs.is_empty() {
        return Err(GlfmError::InvalidInput("loss over zero patches".into()));
    }
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(GlfmError::InvalidInput("non-finite probability".into()));
    }
    Ok(())
}

/// Mean focal loss `-alpha * (1 - p_t)^gamma * ln(p_t)` and its gradient with
/// respect to each probability. `alpha` weights every patch alike, so
/// `gamma = 0, alpha = 1` is plain binary cross-entropy.
pub fn focal_loss(probs: &[f64], labels: &[bool], gamma: f64, alpha: f64) -> Result<(f64, Vec<f64>)> {
    check_pair(probs, labels)?;
    let n = probs.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(probs.len());
    for (&p, &y) in probs.iter().zip(labels) {
        let p = clamp_prob(p);
        // p_t and d p_t / d p
        let (pt, dpt) = if y { (p, 1.0) } else { (1.0 - p, -1.0) };
        let q = 1.0 - pt;
        let log_pt = pt.ln();
        loss += -alpha * q.powf(gamma) * log_pt;
        // d/dpt [-(1-pt)^g ln pt] = g (1-pt)^(g-1) ln pt - (1-pt)^g / pt
        let d_pt = if gamma == 0.0 {
            -1.0 / pt
        } else {
            gamma * q.powf(gamma - 1.0) * log_pt - q.powf(gamma) / pt
        };
        grad.push(alpha * d_pt * dpt / n);
    }
    Ok((loss / n, grad))
}

/// Soft IoU loss `1 - sum(p*y) / sum(p + y - p*y)` and its gradient.
/// Requires at least one positive label. No clamping is needed here.
pub fn soft_iou_loss(probs: &[f64], labels: &[bool]) -> Result<(f64, Vec<f64>)> {
    check_pair(probs, labels)?;
    if !labels.iter().any(|&y| y) {
        return Err(GlfmError::InvalidInput("soft IoU is undefined without positive labels".into()));
    }
    let mut inter = 0.0;
    let mut union = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        let y = y as u8 as f64;
        inter += p * y;
        union += p + y - p * y;
    }
    let loss = 1.0 - inter / union;
    let u2 = union * union;
    let grad = labels
        .iter()
        .map(|&y| {
            let y = y as u8 as f64;
            // d inter/dp = y, d union/dp = 1 - y
            -(y * union - inter * (1.0 - y)) / u2
        })
        .collect();
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegHead {
    pub layers: Vec<DenseLayer>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl SegHead {
    /// All-zero head: every probability is 0.5.
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        Self::with_init(dim, hidden, |_| 0.0)
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` weights, zero biases.
    pub fn init(dim: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        Self::with_init(dim, hidden, |fan_in| {
            let s = 1.0 / (fan_in as f64).sqrt();
            rng.uniform(-s, s)
        })
    }

    fn with_init(dim: usize, hidden: usize, mut draw: impl FnMut(usize) -> f64) -> Self {
        let shapes: Vec<(usize, usize)> = if hidden == 0 {
            vec![(dim, 1)]
        } else {
            vec![(dim, hidden), (hidden, 1)]
        };
        let layers = shapes
            .into_iter()
            .map(|(i, o)| DenseLayer {
                inputs: i,
                outputs: o,
                weights: (0..i * o).map(|_| draw(i)).collect(),
                bias: vec![0.0; o],
            })
            .collect();
        SegHead { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.layers.len() > 2 {
            return Err(GlfmError::Model("segmentation head must have 1 or 2 layers".into()));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(GlfmError::Model(format!("layer {k} has inconsistent shapes")));
            }
            if k > 0 && l.inputs != self.layers[k - 1].outputs {
                return Err(GlfmError::Model(format!("layer {k} does not chain from layer {}", k - 1)));
            }
        }
        if self.layers.last().unwrap().outputs != 1 {
            return Err(GlfmError::Model("segmentation head must end in one output".into()));
        }
        Ok(())
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            l.forward(&cur, &mut next);
            if k < last {
                for v in &mut next {
                    *v = v.tanh();
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    pub fn prob(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Accumulates `scale * d logit / d params` into `grad` (same layout).
    fn backprop(&self, x: &[f64], scale: f64, grad: &mut SegHead) {
        if self.layers.len() == 1 {
            let g = &mut grad.layers[0];
            for (gw, xi) in g.weights.iter_mut().zip(x) {
                *gw += scale * xi;
            }
            g.bias[0] += scale;
            return;
        }
        let (l0, l1) = (&self.layers[0], &self.layers[1]);
        let mut h = Vec::new();
        l0.forward(x, &mut h);
        for v in &mut h {
            *v = v.tanh();
        }
        {
            let g1 = &mut grad.layers[1];
            for (gw, hv) in g1.weights.iter_mut().zip(&h) {
                *gw += scale * hv;
            }
            g1.bias[0] += scale;
        }
        let g0 = &mut grad.layers[0];
        for j in 0..l0.outputs {
            let dh = scale * l1.weights[j] * (1.0 - h[j] * h[j]);
            let row = &mut g0.weights[j * l0.inputs..(j + 1) * l0.inputs];
            for (gw, xi) in row.iter_mut().zip(x) {
                *gw += dh * xi;
            }
            g0.bias[j] += dh;
        }
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().copied().collect()
    }

    /// Gradient of the logit at `x` in [`SegHead::flat_params`] order.
    pub fn logit_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = SegHead::zeros(self.input_dim(), self.hidden_width());
        self.backprop(x, 1.0, &mut g);
        g.flat_params()
    }

    fn hidden_width(&self) -> usize {
        if self.layers.len() == 2 {
            self.layers[0].outputs
        } else {
            0
        }
    }
}

/// Per-patch anomaly probabilities.
pub fn predict_patch_probs(head: &SegHead, features: &FeatureSet) -> Result<Vec<f64>> {
    if features.dim() != head.input_dim() {
        return Err(GlfmError::DimensionMismatch {
            expected: head.input_dim(),
            actual: features.dim(),
        });
    }
    Ok(features.rows().map(|r| head.prob(r)).collect())
}

pub fn predict_patch_logits(head: &SegHead, features: &FeatureSet) -> Result<Vec<f64>> {
    if features.dim() != head.input_dim() {
        return Err(GlfmError::DimensionMismatch {
            expected: head.input_dim(),
            actual: features.dim(),
        });
    }
    Ok(features.rows().map(|r| head.logit(r)).collect())
}

/// Patch labels by majority vote of member points, each point belonging to
/// its nearest center. Half or more anomalous members makes a positive patch.
pub fn patch_labels(cloud: &PointCloud, mask: &[bool], centers: &[[f64; 3]]) -> Result<Vec<bool>> {
    if mask.len() != cloud.len() {
        return Err(GlfmError::InvalidInput("mask length differs from point count".into()));
    }
    let owner = assign_to_centers(cloud.points(), centers)?;
    let mut pos = vec![0usize; centers.len()];
    let mut all = vec![0usize; centers.len()];
    for (&o, &m) in owner.iter().zip(mask) {
        all[o] += 1;
        pos[o] += m as usize;
    }
    Ok(pos.iter().zip(&all).map(|(&p, &a)| a > 0 && 2 * p >= a).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    /// Hidden width; 0 gives a linear-logistic head.
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            iterations: 4000,
            batch_size: 64,
            focal_gamma: 2.0,
            focal_alpha: 0.25,
            hidden: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(GlfmError::InvalidInput("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(GlfmError::InvalidInput("momentum must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(GlfmError::InvalidInput("batch_size must be positive".into()));
        }
        Ok(())
    }
}

pub const TRACE_EVERY: usize = 100;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub head: SegHead,
    /// `(iteration, full-data loss)` every [`TRACE_EVERY`] iterations and at
    /// the end.
    pub trace: Vec<(usize, f64)>,
}

/// Combined loss over a set of rows; the IoU term is dropped when the set has
/// no positives.
fn combined_loss(head: &SegHead, rows: &[&[f64]], labels: &[bool], cfg: &TrainConfig) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let logits: Vec<f64> = rows.iter().map(|r| head.logit(r)).collect();
    let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    let (mut loss, mut grad) = focal_loss(&probs, labels, cfg.focal_gamma, cfg.focal_alpha)?;
    if labels.iter().any(|&y| y) {
        let (l2, g2) = soft_iou_loss(&probs, labels)?;
        loss += l2;
        for (g, h) in grad.iter_mut().zip(g2) {
            *g += h;
        }
    }
    Ok((loss, grad, probs))
}

/// Mini-batch gradient descent with momentum on IoU + focal loss.
pub fn train_seg_head(features: &[FeatureSet], labels: &[Vec<bool>], cfg: &TrainConfig, rng: &mut SeededRng) -> Result<TrainOutcome> {
    cfg.validate()?;
    if features.is_empty() || features.len() != labels.len() {
        return Err(GlfmError::InvalidInput("need one label vector per feature set".into()));
    }
    let dim = features[0].dim();
    let mut rows: Vec<&[f64]> = Vec::new();
    let mut ys: Vec<bool> = Vec::new();
    for (fs, lab) in features.iter().zip(labels) {
        if fs.dim() != dim {
            return Err(GlfmError::DimensionMismatch {
                expected: dim,
                actual: fs.dim(),
            });
        }
        if lab.len() != fs.patch_count() {
            return Err(GlfmError::InvalidInput(format!(
                "{} labels for {} patches",
                lab.len(),
                fs.patch_count()
            )));
        }
        rows.extend(fs.rows());
        ys.extend_from_slice(lab);
    }

    let mut head = SegHead::init(dim, cfg.hidden, rng);
    let mut velocity = SegHead::zeros(dim, cfg.hidden);
    let mut trace = Vec::new();
    let total = rows.len();

    for it in 0..cfg.iterations {
        let picks: Vec<usize> = (0..cfg.batch_size).map(|_| rng.below(total)).collect();
        let b_rows: Vec<&[f64]> = picks.iter().map(|&i| rows[i]).collect();
        let b_ys: Vec<bool> = picks.iter().map(|&i| ys[i]).collect();
        let (loss, dprob, probs) = combined_loss(&head, &b_rows, &b_ys, cfg)?;
        if !loss.is_finite() {
            return Err(GlfmError::Diverged { iteration: it, trace });
        }
        let mut grad = SegHead::zeros(dim, cfg.hidden);
        for ((r, dp), p) in b_rows.iter().zip(&dprob).zip(&probs) {
            head.backprop(r, dp * p * (1.0 - p), &mut grad);
        }
        for ((v, g), w) in velocity.params_mut().zip(grad.params()).zip(head.params_mut()) {
            *v = cfg.momentum * *v - cfg.learning_rate * g;
            *w += *v;
        }
        if (it + 1) % TRACE_EVERY == 0 || it + 1 == cfg.iterations {
            let (full, _, _) = combined_loss(&head, &rows, &ys, cfg)?;
            if !full.is_finite() {
                return Err(GlfmError::Diverged { iteration: it, trace });
            }
            trace.push((it + 1, full));
        }
    }
    Ok(TrainOutcome { head, trace })
}

#[derive(Debug, Serialize, Deserialize)]
struct HeadShape {
    layers: Vec<(usize, usize)>,
    hidden_activation: String,
    output_activation: String,
    dtype: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    meta: BTreeMap<String, String>,
}

/// Writes weights as flat little-endian f32 (each layer's weights then bias)
/// plus a JSON shape sidecar carrying `meta`.
pub fn save_head(head: &SegHead, weights_path: &Path, shape_path: &Path, meta: &BTreeMap<String, String>) -> Result<()> {
    let mut bytes = Vec::new();
    for v in head.params() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(weights_path, bytes).map_err(|e| GlfmError::io(weights_path, e))?;
    let shape = HeadShape {
        layers: head.layers.iter().map(|l| (l.inputs, l.outputs)).collect(),
        hidden_activation: "tanh".into(),
        output_activation: "logistic".into(),
        dtype: "f32le".into(),
        meta: meta.clone(),
    };
    let json = serde_json::to_string_pretty(&shape).unwrap();
    fs::write(shape_path, json).map_err(|e| GlfmError::io(shape_path, e))
}

pub fn load_head(weights_path: &Path, shape_path: &Path) -> Result<SegHead> {
    let json = fs::read_to_string(shape_path).map_err(|e| GlfmError::io(shape_path, e))?;
    let shape: HeadShape = serde_json::from_str(&json).map_err(|e| GlfmError::Parse {
        location: shape_path.display().to_string(),
        message: e.to_string(),
    })?;
    let bytes = fs::read(weights_path).map_err(|e| GlfmError::io(weights_path, e))?;
    let expected: usize = shape.layers.iter().map(|(i, o)| i * o + o).sum();
    if bytes.len() != 4 * expected {
        return Err(GlfmError::parse_byte(
            bytes.len().min(4 * expected),
            format!("weights file holds {} bytes, shape needs {}", bytes.len(), 4 * expected),
        ));
    }
    let mut vals = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let layers = shape
        .layers
        .iter()
        .map(|&(i, o)| DenseLayer {
            inputs: i,
            outputs: o,
            weights: vals.by_ref().take(i * o).collect(),
            bias: vals.by_ref().take(o).collect(),
        })
        .collect();
    let head = SegHead { layers };
    head.validate()?;
    Ok(head)
}
