//! End-to-end orchestration over a fixed output layout:
//!
//! ```text
//! out/aligned/{normal,art}/*.csv, out/aligned/average.csv   prepare-landmarks
//! out/model/{pca,clusters}.json, out/model/average.csv      fit-stats
//! out/model/model.json + parameter stores, out/logs/*.csv   train
//! out/landmarks_x.csv, out/landmarks_z.csv, out/targets.csv translate
//! out/mesh.obj, out/energy.csv                              deform
//! out/texture.png, out/loss_trace.csv                       stylize-texture
//! out/views/*.png                                           render
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::assets;
use crate::config::{PipelineConfig, StatsConfig};
use crate::deform::{deform, write_energy_csv, DeformResult};
use crate::error::{Error, Result};
use crate::landmarks::{align_to_average, average_face, load_csv_dir, save_csv_dir, LandmarkSet};
use crate::mesh::{load_obj, save_landmark_ids, save_obj, Projection, TriMesh};
use crate::render::{contact_sheet, render, TextureImage};
use crate::seed::{derive_seed, rng_for};
use crate::stats::{compute_fid, fit_kmeans, fit_pca_with, ClusterModel, CoeffVector, PcaModel};
use crate::style::{optimize_texture, write_trace_csv, ExtractorMode, FeatureStack, StyleResult, StyleSource};
use crate::translation::{
    coefficient_scale, pretrain_classifier, train_autoencoder, train_translation, translate, Architecture,
    EpochLog, TranslationModel,
};

/// Fixed views of the final contact sheet: frontal, then the azimuth and
/// elevation extremes.
pub const SHEET_VIEWS: [(f64, f64); 5] = [(0.0, 0.0), (-30.0, 0.0), (30.0, 0.0), (0.0, -20.0), (0.0, 20.0)];

/// Artifact locations under an output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn aligned_normal(&self) -> PathBuf {
        self.root.join("aligned/normal")
    }

    pub fn aligned_art(&self) -> PathBuf {
        self.root.join("aligned/art")
    }

    pub fn aligned_average(&self) -> PathBuf {
        self.root.join("aligned/average.csv")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.root.join("model")
    }

    pub fn logs(&self) -> PathBuf {
        self.root.join("logs")
    }

    pub fn landmarks_x(&self) -> PathBuf {
        self.root.join("landmarks_x.csv")
    }

    pub fn landmarks_z(&self) -> PathBuf {
        self.root.join("landmarks_z.csv")
    }

    pub fn targets(&self) -> PathBuf {
        self.root.join("targets.csv")
    }

    pub fn mesh(&self) -> PathBuf {
        self.root.join("mesh.obj")
    }

    pub fn mesh_landmark_ids(&self) -> PathBuf {
        self.root.join("mesh.landmarks")
    }

    pub fn energy(&self) -> PathBuf {
        self.root.join("energy.csv")
    }

    pub fn texture(&self) -> PathBuf {
        self.root.join("texture.png")
    }

    pub fn loss_trace(&self) -> PathBuf {
        self.root.join("loss_trace.csv")
    }

    pub fn views(&self) -> PathBuf {
        self.root.join("views")
    }
}

/// PCA, clusters and the average face used for alignment, plus the trained
/// network once available. Stored together in one directory.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub average: LandmarkSet,
    pub pca: PcaModel,
    pub clusters: ClusterModel,
    pub model: Option<TranslationModel>,
}

impl Bundle {
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.average.save_csv(&dir.join("average.csv"))?;
        self.pca.save(&dir.join("pca.json"))?;
        self.clusters.save(&dir.join("clusters.json"))?;
        if let Some(m) = &self.model {
            m.save(dir)?;
        }
        Ok(())
    }

    /// Loads the statistics; the network is loaded when `model.json` exists.
    pub fn load(dir: &Path) -> Result<Self> {
        let model = if dir.join("model.json").exists() {
            Some(TranslationModel::load(dir)?)
        } else {
            None
        };
        Ok(Self {
            average: LandmarkSet::load_csv(&dir.join("average.csv"))?,
            pca: PcaModel::load(&dir.join("pca.json"))?,
            clusters: ClusterModel::load(&dir.join("clusters.json"))?,
            model,
        })
    }

    pub fn require_model(&self) -> Result<&TranslationModel> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::Config(vec!["no trained translation model in the bundle; run train first".into()]))
    }
}

#[derive(Clone, Debug)]
pub struct Prepared {
    pub average: LandmarkSet,
    pub normal: Vec<(String, LandmarkSet)>,
    pub art: Vec<(String, LandmarkSet)>,
}

/// Estimates the average face over both corpora and aligns every sample to it.
pub fn prepare_landmarks(normal: &[(String, LandmarkSet)], art: &[(String, LandmarkSet)]) -> Result<Prepared> {
    let all: Vec<LandmarkSet> = normal.iter().chain(art).map(|(_, s)| s.clone()).collect();
    let average = average_face(&all)?;
    let align = |sets: &[(String, LandmarkSet)]| -> Result<Vec<(String, LandmarkSet)>> {
        sets.iter()
            .map(|(n, s)| Ok((n.clone(), align_to_average(s, &average)?.0)))
            .collect()
    };
    Ok(Prepared {
        normal: align(normal)?,
        art: align(art)?,
        average,
    })
}

pub fn save_prepared(p: &Prepared, layout: &Layout) -> Result<()> {
    save_csv_dir(&layout.aligned_normal(), &p.normal)?;
    save_csv_dir(&layout.aligned_art(), &p.art)?;
    p.average.save_csv(&layout.aligned_average())
}

pub fn load_prepared(layout: &Layout) -> Result<Prepared> {
    Ok(Prepared {
        average: LandmarkSet::load_csv(&layout.aligned_average())?,
        normal: load_csv_dir(&layout.aligned_normal())?,
        art: load_csv_dir(&layout.aligned_art())?,
    })
}

fn sets(named: &[(String, LandmarkSet)]) -> Vec<LandmarkSet> {
    named.iter().map(|(_, s)| s.clone()).collect()
}

/// PCA over the union of both aligned corpora, clusters over the art coefficients.
pub fn fit_stats(p: &Prepared, cfg: &StatsConfig, seed: u64) -> Result<Bundle> {
    let mut all = sets(&p.normal);
    all.extend(sets(&p.art));
    let pca = fit_pca_with(&all, cfg.pca_components)?;
    let art: Vec<CoeffVector> = p.art.iter().map(|(_, s)| pca.project(s)).collect();
    let clusters = fit_kmeans(&art, cfg.clusters, seed)?.model;
    Ok(Bundle {
        average: p.average.clone(),
        pca,
        clusters,
        model: None,
    })
}

#[derive(Clone, Debug)]
pub struct TrainingLogs {
    pub autoencoder: Vec<f64>,
    pub classifier: Vec<f64>,
    pub translation: Vec<EpochLog>,
}

/// Both training stages: autoencoder, then classifier pretraining and the
/// translation branch.
pub fn train_bundle(bundle: &mut Bundle, p: &Prepared, cfg: &PipelineConfig) -> Result<TrainingLogs> {
    let cx: Vec<CoeffVector> = p.normal.iter().map(|(_, s)| bundle.pca.project(s)).collect();
    let cy: Vec<CoeffVector> = p.art.iter().map(|(_, s)| bundle.pca.project(s)).collect();
    let union: Vec<CoeffVector> = cx.iter().chain(&cy).cloned().collect();
    let arch = Architecture::new(bundle.pca.components(), bundle.clusters.k());
    let mut model = TranslationModel::new(arch, coefficient_scale(&union)?, cfg.model_seed())?;
    let autoencoder = train_autoencoder(&mut model, &cx, &cfg.train)?;
    let classifier = pretrain_classifier(&mut model, &cy, &bundle.clusters, &cfg.train)?;
    let translation = train_translation(&mut model, &cx, &cy, &bundle.clusters, &cfg.train)?;
    bundle.model = Some(model);
    Ok(TrainingLogs {
        autoencoder,
        classifier,
        translation,
    })
}

pub fn write_training_logs(logs: &TrainingLogs, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let series = |name: &str, values: &[f64]| -> Result<()> {
        let mut s = String::from("epoch,loss\n");
        for (i, v) in values.iter().enumerate() {
            s.push_str(&format!("{i},{v:e}\n"));
        }
        write_text(&dir.join(name), &s)
    };
    series("autoencoder.csv", &logs.autoencoder)?;
    series("classifier.csv", &logs.classifier)?;
    let mut s = String::from("epoch,recon_y,recon_c,kl,recon_s,adv,class,total,discriminator\n");
    for l in &logs.translation {
        s.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
            l.epoch, l.recon_y, l.recon_c, l.kl, l.recon_s, l.adv, l.class, l.total, l.discriminator
        ));
    }
    write_text(&dir.join("translation.csv"), &s)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    crate::blob::ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Projected landmark vertices of `mesh` under the base view of `proj`.
pub fn mesh_landmarks(mesh: &TriMesh, proj: &Projection) -> Result<LandmarkSet> {
    if mesh.landmark_ids().is_empty() {
        return Err(Error::InvalidMesh("mesh has no landmark vertex ids".into()));
    }
    let camera = proj.camera(mesh.centroid());
    let pts = mesh
        .landmark_ids()
        .iter()
        .map(|&i| camera.project(&mesh.vertices()[i]))
        .collect::<Result<Vec<_>>>()?;
    LandmarkSet::new(&pts)
}

#[derive(Clone, Debug)]
pub struct Translated {
    /// Aligned input landmarks.
    pub aligned_x: LandmarkSet,
    /// Aligned output at the requested scale.
    pub aligned_z: LandmarkSet,
    /// Output mapped back into the input's image frame.
    pub targets: LandmarkSet,
}

/// Aligns both landmark sets, translates, and maps the result back through the
/// inverse of the input's alignment.
pub fn translate_landmarks(bundle: &Bundle, l_x: &LandmarkSet, l_y: &LandmarkSet, t: f64) -> Result<Translated> {
    let model = bundle.require_model()?;
    let (ax, tx) = align_to_average(l_x, &bundle.average)?;
    let (ay, _) = align_to_average(l_y, &bundle.average)?;
    let az = translate(model, &bundle.pca, &ax, &ay, t)?;
    let targets = tx.inverse()?.apply_set(&az)?;
    Ok(Translated {
        aligned_x: ax,
        aligned_z: az,
        targets,
    })
}

pub fn load_mesh(cfg: &PipelineConfig) -> Result<TriMesh> {
    cfg.require(&["mesh"])?;
    let path = cfg.paths.mesh.as_ref().expect("required");
    load_obj(path, cfg.paths.landmark_ids.as_deref())
}

pub fn load_projection(cfg: &PipelineConfig) -> Result<Projection> {
    cfg.require(&["projection"])?;
    Projection::load(cfg.paths.projection.as_ref().expect("required"))
}

/// Writes a mesh and its landmark-id sidecar.
pub fn save_mesh(mesh: &TriMesh, layout: &Layout) -> Result<()> {
    save_obj(mesh, &layout.mesh())?;
    save_landmark_ids(mesh.landmark_ids(), &layout.mesh_landmark_ids())
}

pub fn deform_mesh(mesh: &TriMesh, targets: &LandmarkSet, proj: &Projection, cfg: &PipelineConfig) -> Result<(TriMesh, DeformResult)> {
    let result = deform(mesh, targets, proj, &cfg.deform)?;
    Ok((mesh.with_vertices(result.vertices.clone())?, result))
}

pub fn style_source(cfg: &PipelineConfig) -> Result<StyleSource> {
    match cfg.style.extractor.mode {
        ExtractorMode::External => {
            let path = cfg.style.extractor.external_features.as_ref().ok_or_else(|| {
                Error::Config(vec!["style.extractor.external_features is required in external mode".into()])
            })?;
            Ok(StyleSource::Features(FeatureStack::load(path)?))
        }
        ExtractorMode::Builtin => {
            cfg.require(&["style_image"])?;
            Ok(StyleSource::Image(TextureImage::load_png(
                cfg.paths.style_image.as_ref().expect("required"),
            )?))
        }
    }
}

pub fn stylize(mesh: &TriMesh, texture: &TextureImage, proj: &Projection, cfg: &PipelineConfig) -> Result<StyleResult> {
    optimize_texture(mesh, texture, &style_source(cfg)?, proj, &cfg.style)
}

/// Renders [`SHEET_VIEWS`] into `dir` as `view_<i>.png` plus `contact_sheet.png`.
pub fn render_views(mesh: &TriMesh, texture: &TextureImage, proj: &Projection, size: usize, background: f64, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut images = Vec::new();
    let mut written = Vec::new();
    for (i, &(az, el)) in SHEET_VIEWS.iter().enumerate() {
        let view = render(mesh, texture, &proj.with_view(az, el), (size, size), background)?;
        let path = dir.join(format!("view_{i}.png"));
        view.image.save_png(&path)?;
        written.push(path);
        images.push(view.image);
    }
    let sheet = dir.join("contact_sheet.png");
    contact_sheet(&images, SHEET_VIEWS.len())?.save_png(&sheet)?;
    written.push(sheet);
    Ok(written)
}

/// Loads the bundle from `paths.model`, or prepares, fits and trains one from
/// the corpora into the output layout.
pub fn obtain_bundle(cfg: &PipelineConfig, layout: &Layout) -> Result<Bundle> {
    if let Some(dir) = &cfg.paths.model {
        return Bundle::load(dir);
    }
    cfg.require(&["normal_landmarks", "art_landmarks"])?;
    let normal = load_csv_dir(cfg.paths.normal_landmarks.as_ref().expect("required"))?;
    let art = load_csv_dir(cfg.paths.art_landmarks.as_ref().expect("required"))?;
    let prepared = prepare_landmarks(&normal, &art)?;
    save_prepared(&prepared, layout)?;
    let mut bundle = fit_stats(&prepared, &cfg.stats, cfg.kmeans_seed())?;
    let logs = train_bundle(&mut bundle, &prepared, cfg)?;
    bundle.save(&layout.model_dir())?;
    write_training_logs(&logs, &layout.logs())?;
    Ok(bundle)
}

#[derive(Clone, Debug)]
pub struct PipelineReport {
    pub deform_energy: (f64, f64),
    pub texture_loss: (f64, f64),
    pub artifacts: Vec<PathBuf>,
}

/// Translate, deform and stylize, writing every artifact of the layout.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    cfg.require(&["mesh", "projection", "texture", "exemplar_landmarks"])?;
    let layout = Layout::new(&cfg.paths.output_dir);
    let bundle = obtain_bundle(cfg, &layout)?;
    let mesh = load_mesh(cfg)?;
    let proj = load_projection(cfg)?;
    let texture = TextureImage::load_png(cfg.paths.texture.as_ref().expect("required"))?;
    let exemplar = LandmarkSet::load_csv(cfg.paths.exemplar_landmarks.as_ref().expect("required"))?;

    let l_x = mesh_landmarks(&mesh, &proj)?;
    let tr = translate_landmarks(&bundle, &l_x, &exemplar, cfg.scale)?;
    tr.aligned_x.save_csv(&layout.landmarks_x())?;
    tr.aligned_z.save_csv(&layout.landmarks_z())?;
    tr.targets.save_csv(&layout.targets())?;

    let (mesh_z, dr) = deform_mesh(&mesh, &tr.targets, &proj, cfg)?;
    save_mesh(&mesh_z, &layout)?;
    write_energy_csv(&layout.energy(), &dr.energy_log)?;

    let styled = stylize(&mesh_z, &texture, &proj, cfg)?;
    styled.texture.save_png(&layout.texture())?;
    write_trace_csv(&layout.loss_trace(), &styled.trace)?;

    let mut artifacts = vec![
        layout.landmarks_x(),
        layout.landmarks_z(),
        layout.targets(),
        layout.mesh(),
        layout.energy(),
        layout.texture(),
        layout.loss_trace(),
    ];
    artifacts.extend(render_views(
        &mesh_z,
        &styled.texture,
        &proj,
        cfg.style.image_size,
        cfg.style.background,
        &layout.views(),
    )?);
    let first = styled.trace.first().map_or(0.0, |r| r.total);
    let last = styled.trace.last().map_or(0.0, |r| r.total);
    Ok(PipelineReport {
        deform_energy: (dr.initial_energy(), dr.final_energy()),
        texture_loss: (first, last),
        artifacts,
    })
}

/// FID between two landmark sets over PCA coefficients. With a bundle, both
/// sets are aligned to its average face and projected on its PCA; otherwise
/// the average face and a PCA of `components` modes are fitted on their union.
pub fn evaluate_fid(a: &[LandmarkSet], b: &[LandmarkSet], bundle: Option<&Bundle>, components: usize) -> Result<f64> {
    let union: Vec<LandmarkSet> = a.iter().chain(b).cloned().collect();
    let average = match bundle {
        Some(bd) => bd.average.clone(),
        None => average_face(&union)?,
    };
    let align = |s: &[LandmarkSet]| -> Result<Vec<LandmarkSet>> {
        s.iter().map(|l| Ok(align_to_average(l, &average)?.0)).collect()
    };
    let (aa, ab) = (align(a)?, align(b)?);
    let fitted;
    let pca = match bundle {
        Some(bd) => &bd.pca,
        None => {
            let all: Vec<LandmarkSet> = aa.iter().chain(&ab).cloned().collect();
            fitted = fit_pca_with(&all, components)?;
            &fitted
        }
    };
    let ca: Vec<CoeffVector> = aa.iter().map(|s| pca.project(s)).collect();
    let cb: Vec<CoeffVector> = ab.iter().map(|s| pca.project(s)).collect();
    compute_fid(&ca, &cb)
}

/// Writes the bundled synthetic assets and a smoke-sized `config.json`.
pub fn write_asset_pack(dir: &Path, seed: u64) -> Result<PathBuf> {
    const CORPUS: usize = 150;
    const SIZE: usize = 64;
    let normal: Vec<(String, LandmarkSet)> = assets::normal_corpus(CORPUS, rng_seed(seed, "normal"))
        .into_iter()
        .enumerate()
        .map(|(i, s)| (format!("normal_{i:04}.csv"), s))
        .collect();
    let art: Vec<(String, LandmarkSet)> = assets::art_corpus(CORPUS, rng_seed(seed, "art"))
        .into_iter()
        .enumerate()
        .map(|(i, (s, _))| (format!("art_{i:04}.csv"), s))
        .collect();
    save_csv_dir(&dir.join("corpora/normal"), &normal)?;
    save_csv_dir(&dir.join("corpora/art"), &art)?;
    let mesh = assets::toy_mesh();
    save_obj(&mesh, &dir.join("mesh.obj"))?;
    save_landmark_ids(mesh.landmark_ids(), &dir.join("mesh.landmarks"))?;
    assets::toy_projection(SIZE).save(&dir.join("projection.json"))?;
    assets::toy_texture(SIZE).save_png(&dir.join("texture.png"))?;
    assets::style_image(SIZE).save_png(&dir.join("style.png"))?;
    let mut rng = rng_for(seed, "exemplar");
    assets::art_face(0, &mut rng).save_csv(&dir.join("exemplar.csv"))?;

    let mut cfg = PipelineConfig::default().with_seed(seed);
    cfg.paths.normal_landmarks = Some("corpora/normal".into());
    cfg.paths.art_landmarks = Some("corpora/art".into());
    cfg.paths.mesh = Some("mesh.obj".into());
    cfg.paths.landmark_ids = Some("mesh.landmarks".into());
    cfg.paths.projection = Some("projection.json".into());
    cfg.paths.texture = Some("texture.png".into());
    cfg.paths.style_image = Some("style.png".into());
    cfg.paths.exemplar_landmarks = Some("exemplar.csv".into());
    cfg.paths.output_dir = "out".into();
    cfg.stats.clusters = assets::ART_MODES;
    cfg.train.epochs = 5;
    cfg.train.classifier_epochs = 5;
    cfg.style.iterations = 50;
    cfg.style.image_size = SIZE;
    cfg.style.extractor.k_max = 256;
    let path = dir.join("config.json");
    cfg.save(&path)?;
    Ok(path)
}

fn rng_seed(seed: u64, tag: &str) -> u64 {
    derive_seed(seed, tag)
}

pub fn load_landmark_dir(dir: &Path) -> Result<Vec<LandmarkSet>> {
    Ok(sets(&load_csv_dir(dir)?))
}

/// Sets the global thread pool size from `FACE_SCULPT_THREADS` when present.
/// Results do not depend on the pool size.
pub fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("FACE_SCULPT_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(vec![format!("FACE_SCULPT_THREADS must be a positive integer, got {value:?}")]))?;
    // A second initialization in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
