use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, RmsPropConfig, Tensor};
use crate::error::{Error, Result};
use crate::mesh::{Projection, TriMesh};
use crate::render::{
    rasterize, render_backward, sample_view_within, shade, TextureImage, DEFAULT_BACKGROUND, MAX_AZIMUTH, MAX_ELEVATION,
};
use crate::seed::{rng_for, Rng};
use crate::style::features::{sample_pixels, ExtractorSpec, FeatureExtractor, FeatureStack, FilterBank};
use crate::style::losses::{texture_loss, TextureLoss};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StyleConfig {
    pub beta: f64,
    pub lr: f64,
    pub iterations: usize,
    /// Side of the square rendered views.
    pub image_size: usize,
    pub background: f64,
    /// Views are drawn uniformly within these bounds, in degrees.
    pub max_azimuth: f64,
    pub max_elevation: f64,
    pub seed: u64,
    pub extractor: ExtractorSpec,
}

impl Default for StyleConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            lr: 0.002,
            iterations: 600,
            image_size: 256,
            background: DEFAULT_BACKGROUND,
            max_azimuth: MAX_AZIMUTH,
            max_elevation: MAX_ELEVATION,
            seed: 0,
            extractor: ExtractorSpec::default(),
        }
    }
}

impl StyleConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            v.push(format!("style.beta must be finite and >= 0, got {}", self.beta));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            v.push(format!("style.lr must be positive, got {}", self.lr));
        }
        if self.image_size == 0 {
            v.push("style.image_size must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.background) {
            v.push(format!("style.background must lie in [0, 1], got {}", self.background));
        }
        for (name, value) in [("max_azimuth", self.max_azimuth), ("max_elevation", self.max_elevation)] {
            if !(0.0..90.0).contains(&value) {
                v.push(format!("style.{name} must lie in [0, 90), got {value}"));
            }
        }
        v.extend(self.extractor.violations());
        v
    }
}

/// The style exemplar: an image run through the built-in bank, or a saved
/// feature stack used verbatim.
#[derive(Clone, Debug)]
pub enum StyleSource {
    Image(TextureImage),
    Features(FeatureStack),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub style: f64,
    pub content: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct StyleResult {
    pub texture: TextureImage,
    pub trace: Vec<TraceRow>,
}

/// One random-view evaluation of the texture objective together with the
/// texture gradient.
struct Step {
    loss: TextureLoss,
    grad_texture: Vec<f64>,
}

struct Objective<'a> {
    mesh: &'a TriMesh,
    original: &'a TextureImage,
    proj: &'a Projection,
    center: [f64; 3],
    bank: FilterBank,
    style: &'a StyleSource,
    cfg: &'a StyleConfig,
}

impl<'a> Objective<'a> {
    fn new(
        mesh: &'a TriMesh,
        original: &'a TextureImage,
        style: &'a StyleSource,
        proj: &'a Projection,
        cfg: &'a StyleConfig,
    ) -> Result<Self> {
        let violations = cfg.violations();
        if !violations.is_empty() {
            return Err(Error::Config(violations));
        }
        let bank = cfg.extractor.filter_bank();
        if let StyleSource::Features(f) = style {
            if f.d() != bank.dim() {
                return Err(Error::Shape(format!(
                    "external style features have dimension {}, extractor produces {}",
                    f.d(),
                    bank.dim()
                )));
            }
        }
        Ok(Self {
            mesh,
            original,
            proj,
            center: mesh.centroid(),
            bank,
            style,
            cfg,
        })
    }

    fn eval(&self, texture: &TextureImage, view: (f64, f64), pixel_rng: &mut Rng) -> Result<Step> {
        let s = self.cfg.image_size;
        let camera = self.proj.with_view(view.0, view.1).camera(self.center);
        let raster = rasterize(self.mesh, &camera, s, s)?;
        let iz = shade(&raster, self.mesh, texture, self.cfg.background);
        let ic = shade(&raster, self.mesh, self.original, self.cfg.background);
        let k_max = self.cfg.extractor.k_max;
        let px = sample_pixels(s, s, k_max, pixel_rng);
        let fz = self.bank.extract(&iz.image, &px)?;
        let fc = self.bank.extract(&ic.image, &px)?;
        let fy = match self.style {
            StyleSource::Image(y) => {
                let py = sample_pixels(y.width(), y.height(), k_max, pixel_rng);
                self.bank.extract(y, &py)?
            }
            StyleSource::Features(f) => f.clone(),
        };
        let loss = texture_loss(&fz, &fc, &fy, self.cfg.beta)?;
        let grad_image = self.bank.backward(&iz.image, &px, &loss.grad)?;
        let grad_texture = render_backward(&iz, &grad_image)?;
        Ok(Step { loss, grad_texture })
    }
}

/// RMSprop on the texture of the deformed mesh, one random view per
/// iteration, values clamped to `[0, 1]` after every step. Texels outside
/// every sampled footprint keep their original values.
pub fn optimize_texture(
    mesh: &TriMesh,
    texture: &TextureImage,
    style: &StyleSource,
    proj: &Projection,
    cfg: &StyleConfig,
) -> Result<StyleResult> {
    let obj = Objective::new(mesh, texture, style, proj, cfg)?;
    let mut view_rng = rng_for(cfg.seed, "style-views");
    let mut pixel_rng = rng_for(cfg.extractor.seed, "style-pixels");
    let rms = RmsPropConfig::with_lr(cfg.lr);
    let mut store = ParamStore::new();
    store.insert("texture", Tensor::new(vec![texture.data().len()], texture.data().to_vec())?);
    let mut current = texture.clone();
    let mut trace = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let view = sample_view_within(&mut view_rng, cfg.max_azimuth, cfg.max_elevation);
        let step = obj.eval(&current, view, &mut pixel_rng).map_err(|e| match e {
            Error::NonFinite(what) => Error::NonFinite(format!("{what} at iteration {iteration}")),
            other => other,
        })?;
        trace.push(TraceRow {
            iteration,
            style: step.loss.style,
            content: step.loss.content,
            total: step.loss.total,
        });
        store.set_grad("texture", Tensor::new(vec![step.grad_texture.len()], step.grad_texture)?)?;
        store.rmsprop_step(&rms)?;
        let values = store.get_mut("texture").expect("inserted above").data_mut();
        values.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        current.set_clamped(values)?;
    }
    Ok(StyleResult { texture: current, trace })
}

/// Mean texture loss over fixed views and a fixed pixel seed, for comparing
/// textures on equal terms.
pub fn evaluate_texture_loss(
    mesh: &TriMesh,
    original: &TextureImage,
    texture: &TextureImage,
    style: &StyleSource,
    proj: &Projection,
    cfg: &StyleConfig,
    views: &[(f64, f64)],
) -> Result<f64> {
    let obj = Objective::new(mesh, original, style, proj, cfg)?;
    let mut total = 0.0;
    for (i, &view) in views.iter().enumerate() {
        let mut rng = rng_for(cfg.extractor.seed, &format!("eval-pixels-{i}"));
        total += obj.eval(texture, view, &mut rng)?.loss.total;
    }
    Ok(total / views.len().max(1) as f64)
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    crate::blob::ensure_parent(path)?;
    let mut out = String::from("iteration,style,content,total\n");
    for r in trace {
        out.push_str(&format!("{},{:e},{:e},{:e}\n", r.iteration, r.style, r.content, r.total));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::{style_image, toy_mesh, toy_projection, toy_texture};

    fn small_cfg(iterations: usize) -> StyleConfig {
        StyleConfig {
            iterations,
            image_size: 32,
            extractor: ExtractorSpec {
                k_max: 64,
                ..ExtractorSpec::default()
            },
            ..StyleConfig::default()
        }
    }

    #[test]
    fn texture_stays_in_unit_range_and_trace_is_complete() {
        let mesh = toy_mesh();
        let tex = toy_texture(16);
        let style = StyleSource::Image(style_image(32));
        let r = optimize_texture(&mesh, &tex, &style, &toy_projection(32), &small_cfg(3)).unwrap();
        assert_eq!(r.trace.len(), 3);
        assert!(r.texture.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(r.trace.iter().all(|t| (t.total - t.style - t.content).abs() < 1e-12));
    }

    #[test]
    fn external_dimension_mismatch_is_rejected() {
        let f = FeatureStack::new(vec![0.5; 4 * 10], 10, (0..4).map(|i| [0, i]).collect(), (4, 1)).unwrap();
        let r = optimize_texture(
            &toy_mesh(),
            &toy_texture(16),
            &StyleSource::Features(f),
            &toy_projection(32),
            &small_cfg(1),
        );
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn small_sample_budget_is_a_config_error() {
        let mut cfg = small_cfg(1);
        cfg.extractor.k_max = 10;
        let r = optimize_texture(
            &toy_mesh(),
            &toy_texture(16),
            &StyleSource::Image(style_image(16)),
            &toy_projection(32),
            &cfg,
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
