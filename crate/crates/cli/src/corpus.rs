//! Synthetic two-class corpus: rough plane patches and smooth spheres.
//!
//! Defects synthesized on the smooth spheres look locally like the normal
//! roughness of the planes, so a single shared memory bank can explain them
//! away while per-class banks cannot.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use glfm_core::features::{ExtractorConfig, FpfhRadius};
use glfm_core::io::encode_ply;
use glfm_core::synthesis::{synthesize_anomaly, SynthesisConfig};
use glfm_core::{Point3, PointCloud, SeededRng};

use crate::config::{ClassEntry, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub points: usize,
    pub train_per_class: usize,
    pub test_normal: usize,
    pub test_anomalous: usize,
    /// Height noise (std) of the unit plane patches.
    pub plane_noise: f64,
    pub sphere_radius: f64,
    pub sphere_noise: f64,
    pub synthesis: SynthesisConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            points: 2000,
            train_per_class: 30,
            test_normal: 20,
            test_anomalous: 20,
            plane_noise: 0.012,
            sphere_radius: 0.3,
            sphere_noise: 0.0,
            synthesis: SynthesisConfig {
                c_frac_range: (0.002, 0.005),
                ..Default::default()
            },
        }
    }
}

impl CorpusConfig {
    /// Extractor settings the corpus was tuned with.
    pub fn extractor(&self) -> ExtractorConfig {
        ExtractorConfig {
            patch_count: Some(128),
            fpfh_radius: FpfhRadius::Auto,
            auto_radius_factor: 4.5,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClassData {
    pub name: String,
    pub train: Vec<PointCloud>,
    /// Test clouds, each with a ground-truth mask.
    pub test: Vec<PointCloud>,
}

pub fn plane_patch(rng: &mut SeededRng, n: usize, noise: f64) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            let x = rng.uniform(-0.5, 0.5);
            let y = rng.uniform(-0.5, 0.5);
            [x, y, noise * rng.normal()]
        })
        .collect()
}

pub fn sphere(rng: &mut SeededRng, n: usize, radius: f64, noise: f64) -> Vec<Point3> {
    let r = radius * rng.uniform(0.95, 1.05);
    (0..n)
        .map(|_| {
            let v = [rng.normal(), rng.normal(), rng.normal()];
            let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            let s = (r + noise * rng.normal()) / l;
            [v[0] * s, v[1] * s, v[2] * s]
        })
        .collect()
}

pub fn generate(cfg: &CorpusConfig, seed: u64) -> Result<Vec<ClassData>> {
    let mut rng = SeededRng::new(seed);
    let mut out = Vec::new();
    for (ci, name) in ["plane", "sphere"].into_iter().enumerate() {
        let shape = |rng: &mut SeededRng| match ci {
            0 => plane_patch(rng, cfg.points, cfg.plane_noise),
            _ => sphere(rng, cfg.points, cfg.sphere_radius, cfg.sphere_noise),
        };
        let train = (0..cfg.train_per_class)
            .map(|i| PointCloud::from_points(format!("train_{i:03}"), shape(&mut rng)))
            .collect::<glfm_core::Result<Vec<_>>>()?;
        let mut test = Vec::new();
        for i in 0..cfg.test_normal {
            let n = cfg.points;
            test.push(PointCloud::new(format!("good_{i:03}"), shape(&mut rng), Some(vec![false; n]))?);
        }
        for i in 0..cfg.test_anomalous {
            let clean = PointCloud::from_points(format!("defect_{i:03}"), shape(&mut rng))?;
            let mut drng = rng.split(1000 * ci as u64 + i as u64);
            test.push(synthesize_anomaly(&clean, &cfg.synthesis, &mut drng)?.cloud);
        }
        out.push(ClassData {
            name: name.to_string(),
            train,
            test,
        });
    }
    Ok(out)
}

/// Writes `<root>/<class>/{train,test}/<id>.ply` and returns the class
/// entries for a run config.
pub fn write(classes: &[ClassData], root: &Path) -> Result<Vec<ClassEntry>> {
    let mut entries = Vec::new();
    for c in classes {
        for (split, clouds) in [("train", &c.train), ("test", &c.test)] {
            let dir = root.join(&c.name).join(split);
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            for cloud in clouds {
                let path = dir.join(format!("{}.ply", cloud.id()));
                let bytes = encode_ply(cloud, true, &[], &[])?;
                fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        entries.push(ClassEntry {
            name: c.name.clone(),
            train_dir: PathBuf::from(&c.name).join("train"),
            test_dir: Some(PathBuf::from(&c.name).join("test")),
        });
    }
    Ok(entries)
}

/// A run config for a corpus written by [`write`] into the same directory.
pub fn run_config(cfg: &CorpusConfig, classes: Vec<ClassEntry>, seed: u64, k: usize) -> RunConfig {
    RunConfig {
        seed,
        output_dir: PathBuf::from("out"),
        k,
        coreset_fraction: glfm_core::bank::DEFAULT_CORESET_FRACTION,
        train_per_class: None,
        features_dir: None,
        plane_removal: None,
        classes,
        extractor: cfg.extractor(),
        synthesis: cfg.synthesis.clone(),
        train: Default::default(),
        detect: Default::default(),
        eval: Default::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_sized() {
        let cfg = CorpusConfig {
            points: 300,
            train_per_class: 2,
            test_normal: 1,
            test_anomalous: 2,
            ..Default::default()
        };
        let a = generate(&cfg, 4).unwrap();
        let b = generate(&cfg, 4).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.train, y.train);
            assert_eq!(x.test, y.test);
            assert_eq!(x.test.len(), 3);
            assert!(x.test[0].mask().unwrap().iter().all(|&m| !m));
            assert!(x.test[2].mask().unwrap().iter().any(|&m| m));
        }
    }
}
