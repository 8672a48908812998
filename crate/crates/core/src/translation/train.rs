use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, Graph, Tensor};
use crate::error::{Error, Result};
use crate::seed::{rng_for, Rng};
use crate::stats::{ClusterModel, CoeffVector};
use crate::translation::losses::{discriminator_objective, generator_objective, recon_x, LossWeights};
use crate::translation::model::TranslationModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Epochs of classifier pretraining on cluster labels.
    pub classifier_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            lr: 0.0005,
            batch: 68,
            epochs: 800,
            classifier_epochs: 800,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let names = ["recon_y", "recon_c", "kl", "recon_s", "adv", "class"];
        for (name, w) in names.iter().zip(self.weights.as_array()) {
            if !(w >= 0.0 && w.is_finite()) {
                v.push(format!("train.weights.{name} must be finite and >= 0, got {w}"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            v.push(format!("train.lr must be positive, got {}", self.lr));
        }
        if self.batch == 0 {
            v.push("train.batch must be >= 1".into());
        }
        v
    }

    fn check(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// Epoch means of the translation-branch terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub recon_y: f64,
    pub recon_c: f64,
    pub kl: f64,
    pub recon_s: f64,
    pub adv: f64,
    pub class: f64,
    pub total: f64,
    pub discriminator: f64,
}

/// Shuffled index batches for one epoch; the last batch may be short.
fn epoch_batches(n: usize, batch: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch).map(|c| c.to_vec()).collect()
}

fn gather(t: &Tensor, rows: &[usize]) -> Tensor {
    let data = rows.iter().flat_map(|&r| t.row(r).iter().copied()).collect();
    Tensor::new(vec![rows.len(), t.cols()], data).expect("rows of one tensor")
}

fn nonempty(data: &[CoeffVector]) -> Result<()> {
    if data.is_empty() {
        Err(Error::TooFewSamples { need: 1, got: 0 })
    } else {
        Ok(())
    }
}

/// Stage 1: `E_X` and `G_X` under the reconstruction loss alone. Returns the
/// epoch-mean loss and marks the autoencoder frozen.
pub fn train_autoencoder(model: &mut TranslationModel, data_x: &[CoeffVector], cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.check()?;
    nonempty(data_x)?;
    let x = model.to_net(data_x)?;
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut rng = rng_for(cfg.seed, "autoencoder-batches");
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let mut sum = 0.0;
        for rows in epoch_batches(x.rows(), cfg.batch, &mut rng) {
            let mut g = Graph::new();
            let xv = g.input(gather(&x, &rows))?;
            let loss = recon_x(&mut g, model, xv, true)?;
            let grads = g.backward(loss)?;
            model.ae.load_grads(&g, &grads)?;
            model.ae.adam_step(&adam)?;
            sum += g.scalar_value(loss) * rows.len() as f64;
        }
        history.push(sum / x.rows() as f64);
    }
    model.frozen.autoencoder = true;
    Ok(history)
}

/// Trains `CL` on art coefficients against their cluster labels, then marks
/// it frozen. Returns the epoch-mean cross-entropy.
pub fn pretrain_classifier(
    model: &mut TranslationModel,
    data_y: &[CoeffVector],
    cluster: &ClusterModel,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    cfg.check()?;
    nonempty(data_y)?;
    check_classes(model, cluster)?;
    let y = model.to_net(data_y)?;
    let labels: Vec<usize> = data_y.iter().map(|c| cluster.assign_class(c)).collect();
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut rng = rng_for(cfg.seed, "classifier-batches");
    let mut history = Vec::with_capacity(cfg.classifier_epochs);
    for _ in 0..cfg.classifier_epochs {
        let mut sum = 0.0;
        for rows in epoch_batches(y.rows(), cfg.batch, &mut rng) {
            let mut g = Graph::new();
            let yv = g.input(gather(&y, &rows))?;
            let logits = model.classify_logits(&mut g, yv, true)?;
            let batch_labels: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
            let loss = g.softmax_cross_entropy(logits, &batch_labels)?;
            let grads = g.backward(loss)?;
            model.cls.load_grads(&g, &grads)?;
            model.cls.adam_step(&adam)?;
            sum += g.scalar_value(loss) * rows.len() as f64;
        }
        history.push(sum / y.rows() as f64);
    }
    model.frozen.classifier = true;
    Ok(history)
}

fn check_classes(model: &TranslationModel, cluster: &ClusterModel) -> Result<()> {
    if cluster.k() != model.arch.classes {
        return Err(Error::Shape(format!(
            "cluster model has {} classes, classifier has {}",
            cluster.k(),
            model.arch.classes
        )));
    }
    Ok(())
}

/// Stage 2: alternating discriminator and generator updates, one each per
/// batch of art samples, each paired with a random batch of normal samples.
/// `E_X`, `G_X` and `CL` are never updated.
pub fn train_translation(
    model: &mut TranslationModel,
    data_x: &[CoeffVector],
    data_y: &[CoeffVector],
    cluster: &ClusterModel,
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    cfg.check()?;
    nonempty(data_x)?;
    nonempty(data_y)?;
    check_classes(model, cluster)?;
    let x = model.to_net(data_x)?;
    let y = model.to_net(data_y)?;
    let labels: Vec<usize> = data_y.iter().map(|c| cluster.assign_class(c)).collect();
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut batch_rng = rng_for(cfg.seed, "translation-batches");
    let mut pair_rng = rng_for(cfg.seed, "translation-pairs");
    let mut noise_rng = rng_for(cfg.seed, "translation-noise");
    let style_dim = model.arch.style_dim;
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut sums = [0.0; 8];
        for rows in epoch_batches(y.rows(), cfg.batch, &mut batch_rng) {
            let b = rows.len();
            let yb = gather(&y, &rows);
            let xrows: Vec<usize> = (0..b).map(|_| rand::Rng::random_range(&mut pair_rng, 0..x.rows())).collect();
            let xb = gather(&x, &xrows);
            let lb: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
            let noise = Tensor::new(
                vec![b, style_dim],
                (0..b * style_dim).map(|_| StandardNormal.sample(&mut noise_rng)).collect(),
            )?;

            let fake = {
                let mut h = Graph::new();
                let xv = h.input(xb.clone())?;
                let yv = h.input(yb.clone())?;
                let c = model.encode_x(&mut h, xv, false)?;
                let s = model.encode_style_y(&mut h, yv, false)?;
                let f = model.decode_y(&mut h, c, s.mean, false)?;
                h.value(f).clone()
            };
            let mut gd = Graph::new();
            let d_loss = discriminator_objective(&mut gd, model, &yb, &fake)?;
            let d_grads = gd.backward(d_loss)?;
            model.disc.load_grads(&gd, &d_grads)?;
            model.disc.adam_step(&adam)?;

            let mut gg = Graph::new();
            let terms = generator_objective(&mut gg, model, &xb, &yb, &lb, &noise, &cfg.weights)?;
            let g_grads = gg.backward(terms.total)?;
            model.gen.load_grads(&gg, &g_grads)?;
            model.gen.adam_step(&adam)?;

            let vals = terms.values(&gg);
            for (s, v) in sums.iter_mut().zip(vals) {
                *s += v * b as f64;
            }
            sums[6] += gg.scalar_value(terms.total) * b as f64;
            sums[7] += gd.scalar_value(d_loss) * b as f64;
        }
        let n = y.rows() as f64;
        let m = sums.map(|s| s / n);
        logs.push(EpochLog {
            epoch,
            recon_y: m[0],
            recon_c: m[1],
            kl: m[2],
            recon_s: m[3],
            adv: m[4],
            class: m[5],
            total: m[6],
            discriminator: m[7],
        });
    }
    Ok(logs)
}
