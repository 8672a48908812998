use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Mlp, ParamStore, Tensor, Var};
use crate::blob;
use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::stats::CoeffVector;

/// Layer counts and widths of every sub-network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub coeff_dim: usize,
    pub content_dim: usize,
    pub style_dim: usize,
    pub hidden: usize,
    pub classes: usize,
    pub encoder_layers: usize,
    pub style_layers: usize,
    pub decoder_layers: usize,
    pub disc_layers: usize,
    pub classifier_layers: usize,
}

impl Architecture {
    pub fn new(coeff_dim: usize, classes: usize) -> Self {
        Self {
            coeff_dim,
            content_dim: coeff_dim,
            style_dim: 8,
            hidden: 128,
            classes,
            encoder_layers: 8,
            style_layers: 16,
            decoder_layers: 8,
            disc_layers: 4,
            classifier_layers: 4,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, value) in [
            ("coeff_dim", self.coeff_dim),
            ("content_dim", self.content_dim),
            ("style_dim", self.style_dim),
            ("hidden", self.hidden),
            ("encoder_layers", self.encoder_layers),
            ("style_layers", self.style_layers),
            ("decoder_layers", self.decoder_layers),
            ("disc_layers", self.disc_layers),
            ("classifier_layers", self.classifier_layers),
        ] {
            if value == 0 {
                v.push(format!("architecture.{name} must be >= 1"));
            }
        }
        if self.classes < 2 {
            v.push(format!("architecture.classes must be >= 2, got {}", self.classes));
        }
        v
    }

    /// Normal-face encoder `E_X`.
    pub fn encoder_x(&self) -> Mlp {
        Mlp::new("ex", self.coeff_dim, self.hidden, self.content_dim, self.encoder_layers)
    }

    /// Normal-face decoder `G_X`.
    pub fn decoder_x(&self) -> Mlp {
        Mlp::new("gx", self.content_dim, self.hidden, self.coeff_dim, self.decoder_layers)
    }

    /// Art content encoder `E_Y^C`.
    pub fn content_encoder_y(&self) -> Mlp {
        Mlp::new("eyc", self.coeff_dim, self.hidden, self.content_dim, self.encoder_layers)
    }

    /// Art style encoder `E_Y^S`; outputs mean then log-variance.
    pub fn style_encoder_y(&self) -> Mlp {
        Mlp::new("eys", self.coeff_dim, self.hidden, 2 * self.style_dim, self.style_layers)
    }

    /// Art decoder `G_Y` over `[content, style]`.
    pub fn decoder_y(&self) -> Mlp {
        Mlp::new(
            "gy",
            self.content_dim + self.style_dim,
            self.hidden,
            self.coeff_dim,
            self.decoder_layers,
        )
    }

    pub fn discriminator(&self) -> Mlp {
        Mlp::new("d", self.coeff_dim, self.hidden, 1, self.disc_layers)
    }

    pub fn classifier(&self) -> Mlp {
        Mlp::new("cl", self.coeff_dim, self.hidden, self.classes, self.classifier_layers)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frozen {
    pub autoencoder: bool,
    pub classifier: bool,
}

/// All sub-networks, grouped into the parameter stores each training stage
/// updates. Network inputs and outputs are PCA coefficients divided by
/// `coeff_scale`.
#[derive(Clone, Debug)]
pub struct TranslationModel {
    pub arch: Architecture,
    pub coeff_scale: f64,
    pub frozen: Frozen,
    /// `E_X`, `G_X`.
    pub ae: ParamStore,
    /// `E_Y^C`, `E_Y^S`, `G_Y`.
    pub gen: ParamStore,
    pub disc: ParamStore,
    pub cls: ParamStore,
}

/// Graph nodes of the style encoder head.
#[derive(Clone, Copy, Debug)]
pub struct StyleCode {
    pub mean: Var,
    pub logvar: Var,
}

impl TranslationModel {
    pub fn new(arch: Architecture, coeff_scale: f64, seed: u64) -> Result<Self> {
        let mut violations = arch.violations();
        if !(coeff_scale > 0.0 && coeff_scale.is_finite()) {
            violations.push(format!("coefficient scale must be positive, got {coeff_scale}"));
        }
        if !violations.is_empty() {
            return Err(Error::Config(violations));
        }
        let mut rng = rng_for(seed, "translation-init");
        let mut ae = ParamStore::new();
        arch.encoder_x().init(&mut ae, &mut rng);
        arch.decoder_x().init(&mut ae, &mut rng);
        let mut gen = ParamStore::new();
        arch.content_encoder_y().init(&mut gen, &mut rng);
        arch.style_encoder_y().init(&mut gen, &mut rng);
        arch.decoder_y().init(&mut gen, &mut rng);
        let mut disc = ParamStore::new();
        arch.discriminator().init(&mut disc, &mut rng);
        let mut cls = ParamStore::new();
        arch.classifier().init(&mut cls, &mut rng);
        Ok(Self {
            arch,
            coeff_scale,
            frozen: Frozen::default(),
            ae,
            gen,
            disc,
            cls,
        })
    }

    /// Batch of coefficient vectors as a normalized `[n, coeff_dim]` tensor.
    pub fn to_net(&self, coeffs: &[CoeffVector]) -> Result<Tensor> {
        let d = self.arch.coeff_dim;
        if let Some(c) = coeffs.iter().find(|c| c.len() != d) {
            return Err(Error::Shape(format!("coefficient vector of length {}, model expects {d}", c.len())));
        }
        let data = coeffs.iter().flat_map(|c| c.0.iter().map(|v| v / self.coeff_scale)).collect();
        Tensor::new(vec![coeffs.len(), d], data)
    }

    pub fn from_net(&self, t: &Tensor) -> Vec<CoeffVector> {
        (0..t.rows())
            .map(|r| CoeffVector(t.row(r).iter().map(|v| v * self.coeff_scale).collect()))
            .collect()
    }

    pub fn encode_x(&self, g: &mut Graph, x: Var, trainable: bool) -> Result<Var> {
        self.arch.encoder_x().forward(g, &self.ae, x, trainable)
    }

    pub fn decode_x(&self, g: &mut Graph, c: Var, trainable: bool) -> Result<Var> {
        self.arch.decoder_x().forward(g, &self.ae, c, trainable)
    }

    pub fn encode_content_y(&self, g: &mut Graph, y: Var, trainable: bool) -> Result<Var> {
        self.arch.content_encoder_y().forward(g, &self.gen, y, trainable)
    }

    pub fn encode_style_y(&self, g: &mut Graph, y: Var, trainable: bool) -> Result<StyleCode> {
        let out = self.arch.style_encoder_y().forward(g, &self.gen, y, trainable)?;
        let s = self.arch.style_dim;
        Ok(StyleCode {
            mean: g.slice_cols(out, 0, s)?,
            logvar: g.slice_cols(out, s, 2 * s)?,
        })
    }

    pub fn decode_y(&self, g: &mut Graph, content: Var, style: Var, trainable: bool) -> Result<Var> {
        let z = g.concat(content, style)?;
        self.arch.decoder_y().forward(g, &self.gen, z, trainable)
    }

    pub fn discriminate(&self, g: &mut Graph, y: Var, trainable: bool) -> Result<Var> {
        self.arch.discriminator().forward(g, &self.disc, y, trainable)
    }

    pub fn classify_logits(&self, g: &mut Graph, y: Var, trainable: bool) -> Result<Var> {
        self.arch.classifier().forward(g, &self.cls, y, trainable)
    }

    /// `G_Y(E_X(x), E_Y^S(y).mean)` for normalized batches of equal size.
    pub fn translate_net(&self, x: &Tensor, y: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let (xv, yv) = (g.input(x.clone())?, g.input(y.clone())?);
        let c = self.encode_x(&mut g, xv, false)?;
        let s = self.encode_style_y(&mut g, yv, false)?;
        let out = self.decode_y(&mut g, c, s.mean, false)?;
        Ok(g.value(out).clone())
    }

    /// Arg-max class of `CL` per row of a normalized batch; ties take the lowest index.
    pub fn classify(&self, y: &Tensor) -> Result<Vec<usize>> {
        let logits = self.arch.classifier().forward_values(&self.cls, y)?;
        Ok((0..logits.rows())
            .map(|r| {
                logits
                    .row(r)
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
                    .0
            })
            .collect())
    }

    /// Writes `model.json` plus one parameter checkpoint per store into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = ModelManifest {
            format: "translation-model".into(),
            version: 1,
            architecture: self.arch.clone(),
            coeff_scale: self.coeff_scale,
            frozen: self.frozen,
            stores: STORE_FILES.iter().map(|s| s.to_string()).collect(),
        };
        for (name, store) in STORE_FILES.iter().zip(self.stores()) {
            store.save(&dir.join(name))?;
        }
        blob::write_json(&dir.join(MODEL_MANIFEST), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MODEL_MANIFEST);
        let m: ModelManifest = blob::read_json(&path)?;
        if m.format != "translation-model" || m.stores.len() != STORE_FILES.len() {
            return Err(Error::Format(format!("{}: not a translation-model manifest", path.display())));
        }
        let mut stores = m
            .stores
            .iter()
            .map(|s| ParamStore::load(&dir.join(s)))
            .collect::<Result<Vec<_>>>()?
            .into_iter();
        let mut next = || stores.next().expect("four stores");
        let model = Self {
            arch: m.architecture,
            coeff_scale: m.coeff_scale,
            frozen: m.frozen,
            ae: next(),
            gen: next(),
            disc: next(),
            cls: next(),
        };
        model.check_shapes()?;
        Ok(model)
    }

    fn stores(&self) -> [&ParamStore; 4] {
        [&self.ae, &self.gen, &self.disc, &self.cls]
    }

    /// Every parameter the architecture implies exists with the right shape.
    fn check_shapes(&self) -> Result<()> {
        let a = &self.arch;
        let groups = [
            (&self.ae, vec![a.encoder_x(), a.decoder_x()]),
            (&self.gen, vec![a.content_encoder_y(), a.style_encoder_y(), a.decoder_y()]),
            (&self.disc, vec![a.discriminator()]),
            (&self.cls, vec![a.classifier()]),
        ];
        for (store, mlps) in groups {
            let mut reference = ParamStore::new();
            let mut rng = rng_for(0, "shape-check");
            mlps.iter().for_each(|m| m.init(&mut reference, &mut rng));
            if reference.len() != store.len() {
                return Err(Error::Format(format!(
                    "checkpoint store has {} parameters, architecture needs {}",
                    store.len(),
                    reference.len()
                )));
            }
            for name in reference.names() {
                let want = reference.get(name).expect("listed").shape();
                match store.get(name) {
                    Some(t) if t.shape() == want => {}
                    _ => return Err(Error::UnknownParameter(name.to_string())),
                }
            }
        }
        Ok(())
    }
}

const MODEL_MANIFEST: &str = "model.json";
const STORE_FILES: [&str; 4] = ["autoencoder.json", "generator.json", "discriminator.json", "classifier.json"];

#[derive(Serialize, Deserialize)]
struct ModelManifest {
    format: String,
    version: u32,
    architecture: Architecture,
    coeff_scale: f64,
    frozen: Frozen,
    stores: Vec<String>,
}

/// Root-mean-square coordinate of a coefficient set; the network input scale.
pub fn coefficient_scale(coeffs: &[CoeffVector]) -> Result<f64> {
    let n: usize = coeffs.iter().map(|c| c.len()).sum();
    if n == 0 {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let s = (coeffs.iter().flat_map(|c| c.0.iter()).map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    Ok(if s > 0.0 { s } else { 1.0 })
}
