//! Landmark translation from the normal-face domain into an artistic domain
//! with an explicit style code taken from an exemplar.

pub mod losses;
pub mod model;
pub mod train;

use crate::error::{Error, Result};
use crate::landmarks::LandmarkSet;
use crate::stats::PcaModel;

pub use losses::{
    content_consistency, generator_objective, loss_recon_x, loss_recon_y, GeneratorTerms, LossWeights,
};
pub use model::{coefficient_scale, Architecture, Frozen, TranslationModel};
pub use train::{pretrain_classifier, train_autoencoder, train_translation, EpochLog, TrainConfig};

/// Translates aligned `l_x` toward the geometry style of aligned `l_y`.
/// Returns `(1 - t) * l_x + t * l_z`, clamped per coordinate onto that
/// segment, so `t = 0` reproduces `l_x` exactly.
pub fn translate(
    model: &TranslationModel,
    pca: &PcaModel,
    l_x: &LandmarkSet,
    l_y: &LandmarkSet,
    t: f64,
) -> Result<LandmarkSet> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Config(vec![format!("scale must lie in [0, 1], got {t}")]));
    }
    let x = model.to_net(&[pca.project(l_x)])?;
    let y = model.to_net(&[pca.project(l_y)])?;
    let out = model.translate_net(&x, &y)?;
    let l_z = pca.reconstruct(&model.from_net(&out)[0])?;
    l_x.lerp(&l_z, t)
}
