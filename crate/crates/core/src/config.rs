//! Pipeline configuration: one JSON document with a section per stage.
//! Relative paths resolve against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blob;
use crate::deform::DeformConfig;
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::stats::{DEFAULT_CLUSTERS, PCA_COMPONENTS};
use crate::style::{ExtractorMode, StyleConfig};
use crate::translation::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub pca_components: usize,
    pub clusters: usize,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            pca_components: PCA_COMPONENTS,
            clusters: DEFAULT_CLUSTERS,
        }
    }
}

/// Input and output locations. Unset inputs are simply not used by the
/// stages that could consume them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory of normal-face landmark CSV files.
    pub normal_landmarks: Option<PathBuf>,
    /// Directory of art landmark CSV files.
    pub art_landmarks: Option<PathBuf>,
    pub mesh: Option<PathBuf>,
    /// 68 landmark vertex indices; overrides ids carried by the mesh.
    pub landmark_ids: Option<PathBuf>,
    pub projection: Option<PathBuf>,
    pub texture: Option<PathBuf>,
    pub style_image: Option<PathBuf>,
    /// Art landmark CSV of the geometry exemplar.
    pub exemplar_landmarks: Option<PathBuf>,
    /// Trained translation model directory; trained from the corpora if unset.
    pub model: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Paths {
    fn inputs(&self) -> [(&'static str, &Option<PathBuf>); 9] {
        [
            ("normal_landmarks", &self.normal_landmarks),
            ("art_landmarks", &self.art_landmarks),
            ("mesh", &self.mesh),
            ("landmark_ids", &self.landmark_ids),
            ("projection", &self.projection),
            ("texture", &self.texture),
            ("style_image", &self.style_image),
            ("exemplar_landmarks", &self.exemplar_landmarks),
            ("model", &self.model),
        ]
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.normal_landmarks,
            &mut self.art_landmarks,
            &mut self.mesh,
            &mut self.landmark_ids,
            &mut self.projection,
            &mut self.texture,
            &mut self.style_image,
            &mut self.exemplar_landmarks,
            &mut self.model,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
        join(&mut self.output_dir);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Global seed; every stage seed is derived from it.
    pub seed: u64,
    /// Deformation scale `t` in `[0, 1]`.
    pub scale: f64,
    pub paths: Paths,
    pub stats: StatsConfig,
    pub train: TrainConfig,
    pub deform: DeformConfig,
    pub style: StyleConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scale: 1.0,
            paths: Paths {
                output_dir: PathBuf::from("out"),
                ..Paths::default()
            },
            stats: StatsConfig::default(),
            train: TrainConfig::default(),
            deform: DeformConfig::default(),
            style: StyleConfig::default(),
        }
        .with_seed(0)
    }
}

impl PipelineConfig {
    /// Parses a config file, resolving relative paths against its directory.
    /// Does not validate.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = blob::read_json(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.paths.resolve(&base);
        let seed = cfg.seed;
        Ok(cfg.with_seed(seed))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        blob::write_json(path, self)
    }

    /// Sets the global seed and re-derives every stage seed from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = derive_seed(seed, "train");
        self.style.seed = derive_seed(seed, "style-views");
        self.style.extractor.seed = derive_seed(seed, "style-pixels");
        self
    }

    pub fn kmeans_seed(&self) -> u64 {
        derive_seed(self.seed, "kmeans")
    }

    pub fn model_seed(&self) -> u64 {
        derive_seed(self.seed, "model-init")
    }

    /// Every violation found, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(0.0..=1.0).contains(&self.scale) {
            v.push(format!("scale must lie in [0, 1], got {}", self.scale));
        }
        if self.stats.pca_components == 0 {
            v.push("stats.pca_components must be >= 1".into());
        }
        if self.stats.clusters < 2 {
            v.push(format!("stats.clusters must be >= 2, got {}", self.stats.clusters));
        }
        v.extend(self.train.violations());
        v.extend(self.deform.violations());
        v.extend(self.style.violations());
        for (name, p) in self.paths.inputs() {
            if let Some(p) = p {
                if !p.exists() {
                    v.push(format!("paths.{name}: {} does not exist", p.display()));
                }
            }
        }
        if self.style.extractor.mode == ExtractorMode::External {
            if let Some(p) = &self.style.extractor.external_features {
                if !p.exists() {
                    v.push(format!("style.extractor.external_features: {} does not exist", p.display()));
                }
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    /// Checks that the named inputs are set, listing every missing one.
    pub fn require(&self, names: &[&str]) -> Result<()> {
        let missing: Vec<String> = self
            .paths
            .inputs()
            .iter()
            .filter(|(n, p)| names.contains(n) && p.is_none())
            .map(|(n, _)| format!("paths.{n} is required"))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(missing))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_violation_is_reported() {
        let mut cfg = PipelineConfig::default();
        cfg.scale = 2.0;
        cfg.train.lr = -1.0;
        cfg.style.extractor.k_max = 3;
        cfg.paths.mesh = Some(PathBuf::from("/nonexistent/mesh.obj"));
        let v = cfg.violations();
        assert_eq!(v.len(), 4, "{v:?}");
    }

    #[test]
    fn seed_propagates_to_every_stage() {
        let a = PipelineConfig::default().with_seed(1);
        let b = PipelineConfig::default().with_seed(2);
        assert_ne!(a.train.seed, b.train.seed);
        assert_ne!(a.style.seed, b.style.seed);
        assert_ne!(a.style.extractor.seed, b.style.extractor.seed);
        assert_ne!(a.kmeans_seed(), b.kmeans_seed());
    }

    #[test]
    fn round_trip_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.paths.mesh = Some(PathBuf::from("mesh.obj"));
        let path = dir.path().join("config.json");
        cfg.save(&path).unwrap();
        let back = PipelineConfig::load(&path).unwrap();
        assert_eq!(back.paths.mesh, Some(dir.path().join("mesh.obj")));
        assert_eq!(back.train, cfg.train);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, r#"{"train": {"learning_rate": 0.1}}"#).unwrap();
        assert!(PipelineConfig::load(&path).is_err());
    }
}
