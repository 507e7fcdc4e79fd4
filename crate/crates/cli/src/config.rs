//! Run configuration: one TOML file drives every command.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use glfm_core::adaptation::TrainConfig;
use glfm_core::detection::Smoothing;
use glfm_core::features::ExtractorConfig;
use glfm_core::synthesis::SynthesisConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub name: String,
    /// Normal training clouds (`.ply` or `.xyz`).
    pub train_dir: PathBuf,
    /// Test clouds; an integer `anomaly` vertex property is the ground truth.
    #[serde(default)]
    pub test_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneRemoval {
    pub distance_threshold: f64,
    #[serde(default = "default_min_inliers")]
    pub min_inlier_fraction: f64,
}

fn default_min_inliers() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub smoothing: Smoothing,
    /// Weight of the segmentation-head logit in the fused score; 0 disables
    /// fusion.
    pub fusion_lambda: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            smoothing: Smoothing::Nearest,
            fusion_lambda: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub fpr_limit: f64,
    pub region_radius_factor: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            fpr_limit: glfm_core::eval::DEFAULT_FPR_LIMIT,
            region_radius_factor: glfm_core::eval::DEFAULT_REGION_RADIUS_FACTOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Number of global clusters.
    pub k: usize,
    #[serde(default = "default_fraction")]
    pub coreset_fraction: f64,
    /// Keep only this many training clouds per class (seeded choice).
    #[serde(default)]
    pub train_per_class: Option<usize>,
    /// Root of externally exported feature files, laid out like
    /// `<output_dir>/features`. Required when `extractor.kind = "external"`.
    #[serde(default)]
    pub features_dir: Option<PathBuf>,
    #[serde(default)]
    pub plane_removal: Option<PlaneRemoval>,
    pub classes: Vec<ClassEntry>,
    #[serde(default)]
    pub extractor: ExtractorConfig,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub detect: DetectConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_fraction() -> f64 {
    glfm_core::bank::DEFAULT_CORESET_FRACTION
}

/// A parsed config plus where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Hex SHA-256 of the canonical JSON form of `config`.
    pub hash: String,
    base: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).context("invalid config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            bail!("config lists no classes");
        }
        let mut names = BTreeSet::new();
        for c in &self.classes {
            if c.name.is_empty() || c.name.contains(['/', '\\', ',']) {
                bail!("class name {:?} must be non-empty without '/', '\\' or ','", c.name);
            }
            if !names.insert(&c.name) {
                bail!("class {:?} is listed twice", c.name);
            }
        }
        if self.k == 0 {
            bail!("k must be at least 1");
        }
        if !(self.coreset_fraction > 0.0 && self.coreset_fraction <= 1.0) {
            bail!("coreset_fraction must lie in (0, 1]");
        }
        if self.train_per_class == Some(0) {
            bail!("train_per_class must be positive");
        }
        if !(0.0..=1.0).contains(&self.detect.fusion_lambda) {
            bail!("detect.fusion_lambda must lie in [0, 1]");
        }
        if !(self.eval.fpr_limit > 0.0 && self.eval.fpr_limit <= 1.0) {
            bail!("eval.fpr_limit must lie in (0, 1]");
        }
        self.extractor.validate()?;
        self.synthesis.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config = RunConfig::parse(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self::from_config(config, base))
    }

    pub fn from_config(config: RunConfig, base: PathBuf) -> LoadedConfig {
        let hash = config.hash();
        LoadedConfig { config, hash, base }
    }

    /// Applies command-line overrides and refreshes the hash.
    pub fn with_train_per_class(mut self, n: Option<usize>) -> Result<LoadedConfig> {
        if n.is_some() {
            self.config.train_per_class = n;
            self.config.validate()?;
            self.hash = self.config.hash();
        }
        Ok(self)
    }

    /// Resolves a config path relative to the config file's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Directory relative paths in the config are resolved against.
    pub fn base(&self) -> &Path {
        &self.base
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }
}
