//! The six pipeline stages. Each reads the run config, consumes files written
//! by earlier stages and writes its own directory under `output_dir`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use glfm_core::adaptation::{load_head, patch_labels, save_head, train_seg_head, SegHead};
use glfm_core::bank::{build_model, load_model, save_model, BuildOptions};
use glfm_core::detection::{calibrate_fusion, DetectOptions, Detector, Fusion};
use glfm_core::eval::{evaluate, score_distribution_dump, write_curve_csv, EvalOptions, EvalReport, EvalSample};
use glfm_core::features::{extract_local_features, load_features_as, save_features, ExtractorKind, FeatureSet, Normalize};
use glfm_core::io::{encode_ply, parse_ply_vertices, read_cloud_auto, ExtraProperty};
use glfm_core::plane::remove_dominant_plane;
use glfm_core::rng::derive_seed;
use glfm_core::synthesis::{synthesize_anomaly, Provenance};
use glfm_core::{PointCloud, SeededRng};
use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::LoadedConfig;

const STREAM_SYNTH: u64 = 1;
const STREAM_ADAPT: u64 = 2;
const STREAM_FIT: u64 = 3;
const STREAM_SUBSAMPLE: u64 = 4;
const STREAM_PLANE: u64 = 5;

pub const SYNTH_DIR: &str = "synth";
pub const FEATURES_DIR: &str = "features";
pub const HEAD_DIR: &str = "head";
pub const MODEL_DIR: &str = "model";
pub const DETECT_DIR: &str = "detect";
pub const EVAL_DIR: &str = "eval";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Synth,
}

impl Split {
    fn dir(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Synth => "synth",
        }
    }
}

/// One cloud on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub class: String,
    pub id: String,
    pub path: PathBuf,
}

/// Stable 64-bit stream id for a sample.
fn sample_stream(class: &str, id: &str) -> u64 {
    let d = Sha256::digest(format!("{class}/{id}").as_bytes());
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn provenance_comments(cfg: &LoadedConfig) -> Vec<String> {
    vec![format!("config_hash {}", cfg.hash), format!("seed {}", cfg.seed())]
}

fn csv_preamble(cfg: &LoadedConfig) -> String {
    format!("# config_hash={} seed={}\n", cfg.hash, cfg.seed())
}

/// Cloud files (`.ply`, `.xyz`) in `dir`, sorted by name.
pub fn list_clouds(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        bail!("directory {} does not exist", dir.display());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("ply") | Some("xyz")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn samples_in(class: &str, dir: &Path) -> Result<Vec<Sample>> {
    let samples: Vec<Sample> = list_clouds(dir)?
        .into_iter()
        .map(|path| Sample {
            class: class.to_string(),
            id: path.file_stem().unwrap().to_string_lossy().into_owned(),
            path,
        })
        .collect();
    for w in samples.windows(2) {
        if w[0].id == w[1].id {
            bail!("class '{class}' has two clouds with id '{}'", w[0].id);
        }
    }
    Ok(samples)
}

/// Training clouds of every class, thinned to `train_per_class` if set.
pub fn train_samples(cfg: &LoadedConfig) -> Result<Vec<Sample>> {
    let mut all = Vec::new();
    for (ci, class) in cfg.config.classes.iter().enumerate() {
        let mut samples = samples_in(&class.name, &cfg.resolve(&class.train_dir))?;
        if samples.is_empty() {
            bail!("class '{}' has no training clouds", class.name);
        }
        if let Some(n) = cfg.config.train_per_class {
            if n < samples.len() {
                let mut rng = SeededRng::new(derive_seed(cfg.seed(), STREAM_SUBSAMPLE)).split(ci as u64);
                rng.shuffle(&mut samples);
                samples.truncate(n);
                samples.sort_by(|a, b| a.id.cmp(&b.id));
            }
        }
        all.extend(samples);
    }
    Ok(all)
}

pub fn test_samples(cfg: &LoadedConfig) -> Result<Vec<Sample>> {
    let mut all = Vec::new();
    for class in &cfg.config.classes {
        if let Some(dir) = &class.test_dir {
            all.extend(samples_in(&class.name, &cfg.resolve(dir))?);
        }
    }
    if all.is_empty() {
        bail!("no class has a test_dir with clouds");
    }
    Ok(all)
}

/// Reads a cloud and applies the configured preprocessing.
pub fn load_cloud(cfg: &LoadedConfig, sample: &Sample) -> Result<PointCloud> {
    let cloud = read_cloud_auto(&sample.path)
        .with_context(|| format!("sample '{}' of class '{}'", sample.id, sample.class))?
        .with_id(sample.id.clone());
    Ok(match &cfg.config.plane_removal {
        Some(p) => {
            let mut rng = SeededRng::new(derive_seed(cfg.seed(), STREAM_PLANE)).split(sample_stream(&sample.class, &sample.id));
            remove_dominant_plane(&cloud, p.distance_threshold, p.min_inlier_fraction, &mut rng)
        }
        None => cloud,
    })
}

fn features_root(cfg: &LoadedConfig) -> Result<PathBuf> {
    match cfg.config.extractor.kind {
        ExtractorKind::Fpfh => Ok(cfg.output_dir().join(FEATURES_DIR)),
        ExtractorKind::External => cfg
            .config
            .features_dir
            .as_ref()
            .map(|d| cfg.resolve(d))
            .ok_or_else(|| anyhow!("extractor.kind = \"external\" needs features_dir")),
    }
}

pub fn feature_path(root: &Path, split: Split, class: &str, id: &str) -> PathBuf {
    root.join(split.dir()).join(class).join(format!("{id}.gft"))
}

/// Loads the stored features of a sample, tagged with the configured
/// extractor id.
pub fn load_sample_features(cfg: &LoadedConfig, split: Split, class: &str, id: &str) -> Result<FeatureSet> {
    let path = feature_path(&features_root(cfg)?, split, class, id);
    if !path.is_file() {
        bail!(
            "no feature file for sample '{id}' (class '{class}', {} split): expected {}",
            split.dir(),
            path.display()
        );
    }
    Ok(load_features_as(&path, &cfg.config.extractor.extractor_id())?)
}

fn per_sample_log(stage: &str, id: &str, points: usize, started: Instant) {
    let secs = started.elapsed().as_secs_f64();
    info!(
        "{stage} {id}: {points} points in {:.1} ms ({:.0} points/s)",
        secs * 1e3,
        points as f64 / secs.max(1e-9)
    );
}

fn batch_log(stage: &str, count: usize, started: Instant) {
    let secs = started.elapsed().as_secs_f64();
    info!(
        "{stage}: {count} samples in {secs:.2} s ({:.1} ms/sample)",
        1e3 * secs / count.max(1) as f64
    );
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthEntry {
    pub class: String,
    pub id: String,
    pub source: PathBuf,
    pub output: PathBuf,
    pub anomalous_points: usize,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config_hash: String,
    pub seed: u64,
    pub entries: Vec<SynthEntry>,
}

pub fn synth_manifest_path(cfg: &LoadedConfig) -> PathBuf {
    cfg.output_dir().join(SYNTH_DIR).join("manifest.json")
}

/// Fabricates one anomalous copy of every training cloud.
pub fn cmd_synth(cfg: &LoadedConfig) -> Result<SynthManifest> {
    let samples = train_samples(cfg)?;
    let out_dir = cfg.output_dir().join(SYNTH_DIR);
    let base = SeededRng::new(derive_seed(cfg.seed(), STREAM_SYNTH));
    let started = Instant::now();
    let entries = samples
        .par_iter()
        .map(|s| {
            let t = Instant::now();
            let cloud = load_cloud(cfg, s)?;
            let mut rng = SeededRng::new(base.split(sample_stream(&s.class, &s.id)).next_u64());
            let syn = synthesize_anomaly(&cloud, &cfg.config.synthesis, &mut rng)
                .with_context(|| format!("synthesizing sample '{}'", s.id))?;
            let output = PathBuf::from(&s.class).join(format!("{}.ply", s.id));
            let bytes = encode_ply(&syn.cloud, true, &[], &provenance_comments(cfg))?;
            write_file(&out_dir.join(&output), bytes)?;
            per_sample_log("synth", &s.id, cloud.len(), t);
            Ok(SynthEntry {
                class: s.class.clone(),
                id: s.id.clone(),
                source: s.path.clone(),
                output,
                anomalous_points: syn.mask.iter().filter(|&&m| m).count(),
                provenance: syn.provenance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    batch_log("synth", entries.len(), started);
    let manifest = SynthManifest {
        config_hash: cfg.hash.clone(),
        seed: cfg.seed(),
        entries,
    };
    write_json(&synth_manifest_path(cfg), &manifest)?;
    Ok(manifest)
}

pub fn read_synth_manifest(cfg: &LoadedConfig) -> Result<SynthManifest> {
    let path = synth_manifest_path(cfg);
    if !path.is_file() {
        bail!("{} is missing; run `synth` first", path.display());
    }
    read_json(&path)
}

// ------------------------------------------------------------- features

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub split: Split,
    pub class: String,
    pub id: String,
    pub patches: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub config_hash: String,
    pub seed: u64,
    pub extractor_id: String,
    pub entries: Vec<FeatureEntry>,
}

/// Extracts features for the training, test and (if present) synthetic
/// clouds.
pub fn cmd_features(cfg: &LoadedConfig) -> Result<FeatureManifest> {
    if cfg.config.extractor.kind == ExtractorKind::External {
        bail!("extractor.kind is \"external\": features are read from features_dir, nothing to extract");
    }
    let mut jobs: Vec<(Split, Sample)> = Vec::new();
    jobs.extend(train_samples(cfg)?.into_iter().map(|s| (Split::Train, s)));
    if cfg.config.classes.iter().any(|c| c.test_dir.is_some()) {
        jobs.extend(test_samples(cfg)?.into_iter().map(|s| (Split::Test, s)));
    }
    let synth = synth_manifest_path(cfg);
    if synth.is_file() {
        let m: SynthManifest = read_json(&synth)?;
        let dir = cfg.output_dir().join(SYNTH_DIR);
        jobs.extend(m.entries.into_iter().map(|e| {
            (
                Split::Synth,
                Sample {
                    class: e.class,
                    id: e.id,
                    path: dir.join(e.output),
                },
            )
        }));
    }
    let root = features_root(cfg)?;
    let started = Instant::now();
    let entries = jobs
        .par_iter()
        .map(|(split, s)| {
            let t = Instant::now();
            // synthetic clouds are already preprocessed
            let cloud = if *split == Split::Synth {
                read_cloud_auto(&s.path)?.with_id(s.id.clone())
            } else {
                load_cloud(cfg, s)?
            };
            let fs = extract_local_features(&cloud, &cfg.config.extractor)
                .with_context(|| format!("extracting features of sample '{}' (class '{}')", s.id, s.class))?;
            let out = feature_path(&root, *split, &s.class, &s.id);
            create_dir(out.parent().unwrap())?;
            save_features(&fs, &out)?;
            per_sample_log("features", &s.id, cloud.len(), t);
            Ok(FeatureEntry {
                split: *split,
                class: s.class.clone(),
                id: s.id.clone(),
                patches: fs.patch_count(),
                dim: fs.dim(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    batch_log("features", entries.len(), started);
    let manifest = FeatureManifest {
        config_hash: cfg.hash.clone(),
        seed: cfg.seed(),
        extractor_id: cfg.config.extractor.extractor_id(),
        entries,
    };
    write_json(&root.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

// ---------------------------------------------------------------- adapt

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadManifest {
    pub config_hash: String,
    pub seed: u64,
    pub extractor_id: String,
    pub samples: usize,
    pub positive_patches: usize,
    pub total_patches: usize,
    pub final_loss: f64,
}

fn head_paths(cfg: &LoadedConfig) -> (PathBuf, PathBuf) {
    let dir = cfg.output_dir().join(HEAD_DIR);
    (dir.join("head.f32"), dir.join("head.json"))
}

/// Trains the segmentation head on the synthetic anomalies.
pub fn cmd_adapt(cfg: &LoadedConfig) -> Result<HeadManifest> {
    let manifest = read_synth_manifest(cfg)?;
    if manifest.entries.is_empty() {
        bail!("synthetic manifest has no entries");
    }
    let synth_dir = cfg.output_dir().join(SYNTH_DIR);
    let loaded = manifest
        .entries
        .par_iter()
        .map(|e| {
            let cloud = read_cloud_auto(&synth_dir.join(&e.output))?;
            let mask = cloud
                .mask()
                .ok_or_else(|| anyhow!("synthetic cloud '{}' has no anomaly mask", e.id))?
                .to_vec();
            let fs = load_sample_features(cfg, Split::Synth, &e.class, &e.id)?;
            let labels = patch_labels(&cloud, &mask, fs.centers())?;
            Ok((fs, labels))
        })
        .collect::<Result<Vec<_>>>()?;
    let (features, labels): (Vec<FeatureSet>, Vec<Vec<bool>>) = loaded.into_iter().unzip();
    let mut rng = SeededRng::new(derive_seed(cfg.seed(), STREAM_ADAPT));
    let started = Instant::now();
    let outcome = train_seg_head(&features, &labels, &cfg.config.train, &mut rng)?;
    info!(
        "adapt: {} iterations in {:.2} s",
        cfg.config.train.iterations,
        started.elapsed().as_secs_f64()
    );

    let (weights, shape) = head_paths(cfg);
    create_dir(weights.parent().unwrap())?;
    let meta = [("config_hash", cfg.hash.clone()), ("seed", cfg.seed().to_string())]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    save_head(&outcome.head, &weights, &shape, &meta)?;
    let mut trace = csv_preamble(cfg);
    trace.push_str("iteration,loss\n");
    for (it, loss) in &outcome.trace {
        writeln!(trace, "{it},{loss}").unwrap();
    }
    write_file(&cfg.output_dir().join(HEAD_DIR).join("loss_trace.csv"), trace)?;

    let pos: usize = labels.iter().flatten().filter(|&&y| y).count();
    let report = HeadManifest {
        config_hash: cfg.hash.clone(),
        seed: cfg.seed(),
        extractor_id: cfg.config.extractor.extractor_id(),
        samples: features.len(),
        positive_patches: pos,
        total_patches: labels.iter().map(Vec::len).sum(),
        final_loss: outcome.trace.last().map_or(f64::NAN, |t| t.1),
    };
    write_json(&cfg.output_dir().join(HEAD_DIR).join("manifest.json"), &report)?;
    Ok(report)
}

fn load_trained_head(cfg: &LoadedConfig) -> Result<SegHead> {
    let (weights, shape) = head_paths(cfg);
    if !weights.is_file() {
        bail!("fusion needs a trained head at {}; run `adapt` first", weights.display());
    }
    Ok(load_head(&weights, &shape)?)
}

// ------------------------------------------------------------------ fit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub config_hash: String,
    pub seed: u64,
    pub k: usize,
    pub dim: usize,
    pub extractor_id: String,
    pub training_samples: usize,
    pub cluster_sizes: Vec<usize>,
    pub routed_rows: Vec<usize>,
    pub bank_sizes: Vec<usize>,
    pub kmeans_iterations: usize,
    pub kmeans_converged: bool,
    pub sse_trace: Vec<f64>,
    /// `(class, id, cluster)` for every training sample.
    pub routes: Vec<(String, String, usize)>,
    pub fusion: bool,
}

pub fn model_path(cfg: &LoadedConfig) -> PathBuf {
    cfg.output_dir().join(MODEL_DIR).join("model.glfm")
}

/// Builds the global and local memory banks from all training classes.
pub fn cmd_fit(cfg: &LoadedConfig) -> Result<BuildReport> {
    let samples = train_samples(cfg)?;
    if cfg.config.k > samples.len() {
        bail!(
            "k = {} exceeds the number of training samples ({})",
            cfg.config.k,
            samples.len()
        );
    }
    let train = samples
        .par_iter()
        .map(|s| load_sample_features(cfg, Split::Train, &s.class, &s.id))
        .collect::<Result<Vec<_>>>()?;
    let started = Instant::now();
    let mut model = build_model(
        &train,
        &BuildOptions {
            k: cfg.config.k,
            coreset_fraction: cfg.config.coreset_fraction,
            normalize: cfg.config.extractor.normalize == Normalize::Zscore,
            seed: derive_seed(cfg.seed(), STREAM_FIT),
            ..Default::default()
        },
    )?;
    info!("fit: model built in {:.2} s", started.elapsed().as_secs_f64());
    let fusion = cfg.config.detect.fusion_lambda > 0.0;
    if fusion {
        let head = load_trained_head(cfg)?;
        model.fusion = Some(calibrate_fusion(&model, &head, &train)?);
    }
    model.meta.insert("config_hash".into(), cfg.hash.clone());
    model.meta.insert("seed".into(), cfg.seed().to_string());
    model.meta.insert("tool".into(), format!("glfm {}", env!("CARGO_PKG_VERSION")));
    let path = model_path(cfg);
    create_dir(path.parent().unwrap())?;
    save_model(&model, &path)?;

    let p = &model.provenance;
    let report = BuildReport {
        config_hash: cfg.hash.clone(),
        seed: cfg.seed(),
        k: model.k(),
        dim: model.dim,
        extractor_id: model.extractor_id.clone(),
        training_samples: samples.len(),
        cluster_sizes: p.cluster_sizes.clone(),
        routed_rows: p.routed_rows.clone(),
        bank_sizes: model.bank_sizes(),
        kmeans_iterations: p.kmeans_iterations,
        kmeans_converged: p.kmeans_converged,
        sse_trace: p.sse_trace.clone(),
        routes: samples
            .iter()
            .zip(&p.sample_routes)
            .map(|(s, &r)| (s.class.clone(), s.id.clone(), r))
            .collect(),
        fusion,
    };
    write_json(&cfg.output_dir().join(MODEL_DIR).join("build_report.json"), &report)?;
    Ok(report)
}

// --------------------------------------------------------------- detect

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRecord {
    pub config_hash: String,
    pub seed: u64,
    pub class: String,
    pub id: String,
    pub object_score: f64,
    pub routed_idx: usize,
    pub points: usize,
    pub label: Option<bool>,
}

pub fn scores_csv_path(cfg: &LoadedConfig) -> PathBuf {
    cfg.output_dir().join(DETECT_DIR).join("scores.csv")
}

fn detect_ply_path(cfg: &LoadedConfig, class: &str, id: &str) -> PathBuf {
    cfg.output_dir().join(DETECT_DIR).join(class).join(format!("{id}.ply"))
}

/// Scores every test cloud against the stored model.
pub fn cmd_detect(cfg: &LoadedConfig) -> Result<Vec<DetectRecord>> {
    let path = model_path(cfg);
    if !path.is_file() {
        bail!("{} is missing; run `fit` first", path.display());
    }
    let model = load_model(&path)?;
    let expected = cfg.config.extractor.extractor_id();
    if model.extractor_id != expected {
        bail!(
            "model was built with extractor '{}' but the config selects '{expected}'",
            model.extractor_id
        );
    }
    let head = if cfg.config.detect.fusion_lambda > 0.0 {
        Some(load_trained_head(cfg)?)
    } else {
        None
    };
    let opts = DetectOptions {
        smoothing: cfg.config.detect.smoothing,
        fusion: head.as_ref().map(|h| Fusion {
            head: h,
            lambda: cfg.config.detect.fusion_lambda,
        }),
    };
    let detector = Detector::new(&model)?;
    let samples = test_samples(cfg)?;
    let started = Instant::now();
    let records = samples
        .par_iter()
        .map(|s| {
            let cloud = load_cloud(cfg, s)?;
            let fs = load_sample_features(cfg, Split::Test, &s.class, &s.id)?;
            let t = Instant::now();
            let res = detector
                .detect(&cloud, &fs, &opts)
                .with_context(|| format!("detecting sample '{}' (class '{}')", s.id, s.class))?;
            per_sample_log("detect", &s.id, cloud.len(), t);
            let bytes = encode_ply(
                &cloud,
                true,
                &[ExtraProperty {
                    name: "score",
                    values: &res.point_scores,
                }],
                &provenance_comments(cfg),
            )?;
            write_file(&detect_ply_path(cfg, &s.class, &s.id), bytes)?;
            let rec = DetectRecord {
                config_hash: cfg.hash.clone(),
                seed: cfg.seed(),
                class: s.class.clone(),
                id: s.id.clone(),
                object_score: res.object_score,
                routed_idx: res.routed_idx,
                points: cloud.len(),
                label: cloud.mask().map(|m| m.iter().any(|&v| v)),
            };
            write_json(&cfg.output_dir().join(DETECT_DIR).join(&s.class).join(format!("{}.json", s.id)), &rec)?;
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    batch_log("detect", records.len(), started);

    let mut csv = csv_preamble(cfg);
    csv.push_str("class,id,object_score,routed_idx,label\n");
    for r in &records {
        let label = r.label.map_or(String::new(), |l| (l as u8).to_string());
        writeln!(csv, "{},{},{},{},{label}", r.class, r.id, r.object_score, r.routed_idx).unwrap();
    }
    write_file(&scores_csv_path(cfg), csv)?;
    Ok(records)
}

/// Parses the detect CSV back into `(class, id, object_score)` rows.
pub fn read_scores_csv(path: &Path) -> Result<Vec<(String, String, f64)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (n, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            header_seen = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            bail!("{}:{}: expected 5 fields", path.display(), n + 1);
        }
        let score: f64 = f[2]
            .parse()
            .with_context(|| format!("{}:{}: bad score", path.display(), n + 1))?;
        rows.push((f[0].to_string(), f[1].to_string(), score));
    }
    Ok(rows)
}

// ----------------------------------------------------------------- eval

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFile {
    pub config_hash: String,
    pub seed: u64,
    pub samples: usize,
    #[serde(flatten)]
    pub report: EvalReport,
}

/// Computes O-ROC, P-ROC and P-PRO from the detect outputs and the ground
/// truth test clouds.
pub fn cmd_eval(cfg: &LoadedConfig) -> Result<EvalReport> {
    let csv = scores_csv_path(cfg);
    if !csv.is_file() {
        bail!("{} is missing; run `detect` first", csv.display());
    }
    let rows = read_scores_csv(&csv)?;
    let tests = test_samples(cfg)?;
    let samples = rows
        .par_iter()
        .map(|(class, id, object_score)| {
            let scored_path = detect_ply_path(cfg, class, id);
            let table = parse_ply_vertices(
                &fs::read(&scored_path).with_context(|| format!("reading {}", scored_path.display()))?,
            )?;
            let scores = table
                .column("score")
                .ok_or_else(|| anyhow!("{} has no score property", scored_path.display()))?
                .to_vec();
            let scored = read_cloud_auto(&scored_path)?;
            let truth = tests
                .iter()
                .find(|s| &s.class == class && &s.id == id)
                .ok_or_else(|| anyhow!("sample '{id}' (class '{class}') is not in the test set"))?;
            let gt = read_cloud_auto(&truth.path)?;
            // preprocessing may have dropped points; the scored cloud then
            // carries the retained part of the ground truth
            let mask = if gt.len() == scored.len() {
                gt.mask().map(<[bool]>::to_vec)
            } else {
                debug!("sample '{id}': using the mask carried through preprocessing");
                scored.mask().map(<[bool]>::to_vec)
            };
            Ok(EvalSample {
                id: id.clone(),
                class: class.clone(),
                points: scored.points().to_vec(),
                point_scores: scores,
                object_score: *object_score,
                mask,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate(
        &samples,
        &EvalOptions {
            fpr_limit: cfg.config.eval.fpr_limit,
            region_radius_factor: cfg.config.eval.region_radius_factor,
        },
    )?;
    let dir = cfg.output_dir().join(EVAL_DIR);
    create_dir(&dir)?;
    write_json(
        &dir.join("report.json"),
        &EvalFile {
            config_hash: cfg.hash.clone(),
            seed: cfg.seed(),
            samples: samples.len(),
            report: report.clone(),
        },
    )?;
    let pre = csv_preamble(cfg);
    for (name, curve, header) in [
        ("o_roc.csv", &report.o_roc_curve, "fpr,tpr"),
        ("p_roc.csv", &report.p_roc_curve, "fpr,tpr"),
        ("pro.csv", &report.pro_curve, "fpr,pro"),
    ] {
        write_curve_csv(curve, &format!("{}{header}", pre), &dir.join(name))?;
    }
    let dump = dir.join("score_distribution.csv");
    score_distribution_dump(&samples, &dump)?;
    let body = fs::read(&dump)?;
    let mut with_pre = pre.into_bytes();
    with_pre.extend_from_slice(&body);
    write_file(&dump, with_pre)?;

    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    info!(
        "eval: O-ROC {} P-ROC {} P-PRO {}",
        fmt(report.o_roc),
        fmt(report.p_roc),
        fmt(report.p_pro)
    );
    for c in &report.per_class {
        info!(
            "eval {}: O-ROC {} P-ROC {} P-PRO {}",
            c.class,
            fmt(c.o_roc),
            fmt(c.p_roc),
            fmt(c.p_pro)
        );
    }
    Ok(report)
}

// ----------------------------------------------------------- gen-corpus

/// Writes the built-in two-class synthetic corpus under `root` together with
/// a matching `config.toml`. Returns the config path.
pub fn cmd_gen_corpus(root: &Path, seed: u64, k: usize, cfg: &crate::corpus::CorpusConfig) -> Result<PathBuf> {
    let classes = crate::corpus::generate(cfg, seed)?;
    create_dir(root)?;
    let entries = crate::corpus::write(&classes, root)?;
    let run = crate::corpus::run_config(cfg, entries, seed, k);
    run.validate()?;
    let path = root.join("config.toml");
    write_file(&path, toml::to_string(&run)?)?;
    info!("gen-corpus: {} classes written to {}", classes.len(), root.display());
    Ok(path)
}
