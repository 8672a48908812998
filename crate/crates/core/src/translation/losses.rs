//! Training objectives as graph builders. Batches are normalized coefficient
//! tensors; every term is a batch mean.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::Result;
use crate::translation::model::TranslationModel;

/// Weights of the six generator terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub recon_y: f64,
    pub recon_c: f64,
    pub kl: f64,
    pub recon_s: f64,
    pub adv: f64,
    pub class: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            recon_y: 1.0,
            recon_c: 0.5,
            kl: 1.0,
            recon_s: 1.0,
            adv: 1.0,
            class: 1.0,
        }
    }
}

impl LossWeights {
    pub fn as_array(&self) -> [f64; 6] {
        [self.recon_y, self.recon_c, self.kl, self.recon_s, self.adv, self.class]
    }
}

/// Mean `|G_X(E_X(x)) - x|`.
pub fn recon_x(g: &mut Graph, model: &TranslationModel, x: Var, trainable: bool) -> Result<Var> {
    let c = model.encode_x(g, x, trainable)?;
    let out = model.decode_x(g, c, trainable)?;
    g.l1_distance(out, x)
}

/// Mean `|G_Y(E_Y^C(y), s) - y|` for a given style code `s`.
pub fn recon_y(g: &mut Graph, model: &TranslationModel, y: Var, style: Var, trainable: bool) -> Result<Var> {
    let c = model.encode_content_y(g, y, trainable)?;
    let out = model.decode_y(g, c, style, trainable)?;
    g.l1_distance(out, y)
}

/// `1/2 sum(mu^2 + exp(logvar) - logvar - 1)`, averaged over rows.
pub fn kl(g: &mut Graph, mean: Var, logvar: Var) -> Result<Var> {
    let (rows, cols) = {
        let t = g.value(mean);
        (t.rows(), t.cols())
    };
    let m2 = g.mul(mean, mean)?;
    let ev = g.exp(logvar)?;
    let a = g.add(m2, ev)?;
    let b = g.sub(a, logvar)?;
    let s = g.sum(b)?;
    let s = g.scale(s, 0.5 / rows as f64)?;
    let offset = g.input(Tensor::scalar(0.5 * cols as f64))?;
    g.sub(s, offset)
}

/// `mean + exp(logvar / 2) * noise`.
pub fn reparameterize(g: &mut Graph, mean: Var, logvar: Var, noise: &Tensor) -> Result<Var> {
    let half = g.scale(logvar, 0.5)?;
    let sd = g.exp(half)?;
    let xi = g.input(noise.clone())?;
    let spread = g.mul(sd, xi)?;
    g.add(mean, spread)
}

/// Non-saturating generator loss `-E[log sigma(D(fake))]`.
pub fn adv_generator(g: &mut Graph, fake_logits: Var) -> Result<Var> {
    g.bce_with_logits(fake_logits, 1.0)
}

/// `-E[log sigma(D(real))] - E[log(1 - sigma(D(fake)))]`.
pub fn adv_discriminator(g: &mut Graph, real_logits: Var, fake_logits: Var) -> Result<Var> {
    let r = g.bce_with_logits(real_logits, 1.0)?;
    let f = g.bce_with_logits(fake_logits, 0.0)?;
    g.add(r, f)
}

/// Nodes of every generator term and their weighted sum.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorTerms {
    pub recon_y: Var,
    pub recon_c: Var,
    pub kl: Var,
    pub recon_s: Var,
    pub adv: Var,
    pub class: Var,
    pub total: Var,
}

impl GeneratorTerms {
    pub fn values(&self, g: &Graph) -> [f64; 6] {
        [self.recon_y, self.recon_c, self.kl, self.recon_s, self.adv, self.class].map(|v| g.scalar_value(v))
    }
}

/// Combined translation-branch objective on a normal batch `x`, an art batch
/// `y` with cluster labels, and standard-normal `noise` for the style sample.
/// The sampled style code drives the in-domain reconstruction and the KL
/// term; cross-domain generation uses the style mean, as inference does.
/// Only the translation-branch parameters are trainable in the graph.
#[allow(clippy::too_many_arguments)]
pub fn generator_objective(
    g: &mut Graph,
    model: &TranslationModel,
    x: &Tensor,
    y: &Tensor,
    labels: &[usize],
    noise: &Tensor,
    w: &LossWeights,
) -> Result<GeneratorTerms> {
    let xv = g.input(x.clone())?;
    let yv = g.input(y.clone())?;
    let c_x = model.encode_x(g, xv, false)?;
    let style = model.encode_style_y(g, yv, true)?;
    let s_y = reparameterize(g, style.mean, style.logvar, noise)?;
    let recon_y = recon_y(g, model, yv, s_y, true)?;
    let kl = kl(g, style.mean, style.logvar)?;
    let fake = model.decode_y(g, c_x, style.mean, true)?;
    let d_fake = model.discriminate(g, fake, false)?;
    let adv = adv_generator(g, d_fake)?;
    let logits = model.classify_logits(g, fake, false)?;
    let class = g.softmax_cross_entropy(logits, labels)?;
    let c_re = model.encode_content_y(g, fake, true)?;
    let recon_c = g.sq_l2_distance(c_re, c_x)?;
    let s_re = model.encode_style_y(g, fake, true)?;
    let recon_s = g.sq_l2_distance(s_re.mean, style.mean)?;
    let terms = [recon_y, recon_c, kl, recon_s, adv, class];
    let mut total: Option<Var> = None;
    for (t, wt) in terms.iter().zip(w.as_array()) {
        let s = g.scale(*t, wt)?;
        total = Some(match total {
            Some(acc) => g.add(acc, s)?,
            None => s,
        });
    }
    Ok(GeneratorTerms {
        recon_y,
        recon_c,
        kl,
        recon_s,
        adv,
        class,
        total: total.expect("six terms"),
    })
}

/// Discriminator objective with generated samples held constant.
pub fn discriminator_objective(g: &mut Graph, model: &TranslationModel, real: &Tensor, fake: &Tensor) -> Result<Var> {
    let r = g.input(real.clone())?;
    let f = g.input(fake.clone())?;
    let dr = model.discriminate(g, r, true)?;
    let df = model.discriminate(g, f, true)?;
    adv_discriminator(g, dr, df)
}

/// Scalar value of [`recon_x`] on a normalized batch.
pub fn loss_recon_x(model: &TranslationModel, x: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let xv = g.input(x.clone())?;
    let l = recon_x(&mut g, model, xv, false)?;
    Ok(g.scalar_value(l))
}

/// Scalar value of [`recon_y`] along the deterministic path (style mean).
pub fn loss_recon_y(model: &TranslationModel, y: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let yv = g.input(y.clone())?;
    let s = model.encode_style_y(&mut g, yv, false)?;
    let l = recon_y(&mut g, model, yv, s.mean, false)?;
    Ok(g.scalar_value(l))
}

/// Mean squared distance between the re-encoded content of `G_Y(E_X(x),
/// E_Y^S(y).mean)` and `E_X(x)`, together with the mean squared norm of
/// `E_X(x)` as the code scale.
pub fn content_consistency(model: &TranslationModel, x: &Tensor, y: &Tensor) -> Result<(f64, f64)> {
    let mut g = Graph::new();
    let (xv, yv) = (g.input(x.clone())?, g.input(y.clone())?);
    let c = model.encode_x(&mut g, xv, false)?;
    let s = model.encode_style_y(&mut g, yv, false)?;
    let fake = model.decode_y(&mut g, c, s.mean, false)?;
    let c_re = model.encode_content_y(&mut g, fake, false)?;
    let err = g.sq_l2_distance(c_re, c)?;
    let zero = g.input(Tensor::zeros(g.value(c).shape()))?;
    let scale = g.sq_l2_distance(c, zero)?;
    Ok((g.scalar_value(err), g.scalar_value(scale)))
}
