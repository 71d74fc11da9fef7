//! Training from scratch: MSE loss on [0, 1]-normalised luma, Adam, step-halving
//! learning rate and random patch sampling.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imageio::{list_images, load_image, Image};
use crate::metrics::{crop, downscale_bicubic, train_gray};
use crate::models::{init_weights, Arch, ModelSpec, WeightBank};
use crate::tensor::{Scalar, Tensor};

pub mod gradcheck;

/// Schedule length the default halving period refers to.
pub const REFERENCE_EPOCHS: usize = 25_000;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub minibatch: usize,
    pub lr0: f64,
    /// Epochs between learning-rate halvings.
    pub halve_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// High resolution patch side; `None` picks [`default_patch_size`].
    pub patch_size: Option<usize>,
    /// Steps per epoch; `None` means one pass over the images.
    pub steps_per_epoch: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: REFERENCE_EPOCHS,
            minibatch: 16,
            lr0: 1e-3,
            halve_every: 3000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            patch_size: None,
            steps_per_epoch: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Default protocol shrunk to `epochs`, with the halving period scaled to match.
    pub fn with_epochs(epochs: usize) -> Self {
        let base = TrainConfig::default();
        let halve_every = ((base.halve_every * epochs) as f64 / REFERENCE_EPOCHS as f64).round() as usize;
        TrainConfig {
            epochs,
            halve_every: halve_every.max(1),
            ..base
        }
    }

    pub fn patch_for(&self, scale: usize) -> usize {
        self.patch_size.unwrap_or_else(|| default_patch_size(scale))
    }

    fn validate(&self, scale: usize) -> Result<()> {
        let patch = self.patch_for(scale);
        if patch == 0 || patch % scale != 0 {
            return Err(Error::invalid(format!("patch size {patch} is not a multiple of scale {scale}")));
        }
        if self.minibatch == 0 || self.halve_every == 0 {
            return Err(Error::invalid("minibatch and halve_every must be positive"));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::invalid("steps per epoch must be positive"));
        }
        Ok(())
    }
}

/// 78 for ×2 and ×3, 76 for ×4; otherwise the largest multiple of the scale up to 78.
pub fn default_patch_size(scale: usize) -> usize {
    match scale {
        4 => 76,
        s => 78 - 78 % s,
    }
}

pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * 0.5f64.powi((epoch / cfg.halve_every) as i32)
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn loss_mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(format!("loss of {} against {}", pred.shape(), target.shape())));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = (p - t).as_f64();
            loss += d * d;
            T::of(2.0 * d / n)
        })
        .collect();
    Ok((loss / n, Tensor::new(pred.shape(), grad)?))
}

/// Bias-corrected Adam moments, one slot per weight.
#[derive(Clone, Debug)]
pub struct AdamState<T = f32> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: WeightBank<T>,
    v: WeightBank<T>,
    t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(weights: &WeightBank<T>, beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState {
            beta1,
            beta2,
            eps,
            m: weights.zeros_like(),
            v: weights.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &WeightBank<T> {
        &self.m
    }

    pub fn second_moment(&self) -> &WeightBank<T> {
        &self.v
    }

    pub fn step(&mut self, weights: &mut WeightBank<T>, grads: &WeightBank<T>, lr: f64) -> Result<()> {
        if !weights.same_layout(grads) || !weights.same_layout(&self.m) {
            return Err(Error::shape("gradients do not match the weight layout"));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((w, g), m), v) in weights
            .values_mut()
            .zip(grads.values())
            .zip(self.m.values_mut())
            .zip(self.v.values_mut())
        {
            for i in 0..w.len() {
                let gi = g[i].as_f64();
                let mi = b1 * m[i].as_f64() + (1.0 - b1) * gi;
                let vi = b2 * v[i].as_f64() + (1.0 - b2) * gi * gi;
                m[i] = T::of(mi);
                v[i] = T::of(vi);
                let update = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
                w[i] = T::of(w[i].as_f64() - update);
            }
        }
        Ok(())
    }
}

/// Random high resolution crop of the training gray plane and its bicubic
/// downscaled counterpart, both in [0, 255].
pub fn sample_patch<R: Rng>(image: &Image, scale: usize, patch: usize, rng: &mut R) -> Result<(Tensor<f32>, Tensor<f32>)> {
    if patch % scale != 0 {
        return Err(Error::invalid(format!("patch {patch} not divisible by scale {scale}")));
    }
    if image.width < patch || image.height < patch {
        return Err(Error::invalid(format!(
            "{}x{} image is smaller than the {patch}x{patch} patch",
            image.width, image.height
        )));
    }
    let top = rng.gen_range(0..=image.height - patch);
    let left = rng.gen_range(0..=image.width - patch);
    let hr = crop(&train_gray(image)?, top, left, patch, patch);
    let lr = downscale_bicubic(&hr, scale)?;
    Ok((lr, hr))
}

fn normalise(x: &Tensor<f32>) -> Tensor<f32> {
    x.map(|v| v / 255.0)
}

/// Optimiser state around one model.
fn trainable(spec: &ModelSpec) -> Result<()> {
    if spec.arch == Arch::Bicubic {
        return Err(Error::invalid("Bicubic has no trainable parameters"));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Trainer {
    weights: WeightBank<f32>,
    adam: AdamState<f32>,
}

impl Trainer {
    pub fn new(weights: WeightBank<f32>, cfg: &TrainConfig) -> Result<Self> {
        trainable(weights.spec())?;
        let adam = AdamState::new(&weights, cfg.beta1, cfg.beta2, cfg.eps);
        Ok(Trainer { weights, adam })
    }

    pub fn weights(&self) -> &WeightBank<f32> {
        &self.weights
    }

    pub fn into_weights(self) -> WeightBank<f32> {
        self.weights
    }

    /// One Adam step on a batch of [0, 255] patches; returns the loss on the
    /// normalised scale before the update.
    pub fn step(&mut self, lr_batch: &Tensor<f32>, hr_batch: &Tensor<f32>, lr: f64) -> Result<f64> {
        let trace = self.weights.forward_trace(&normalise(lr_batch))?;
        let (loss, upstream) = loss_mse(&trace.output, &normalise(hr_batch))?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss became {loss} after {} steps",
                self.adam.steps()
            )));
        }
        let (grads, _) = self.weights.backward(&trace, &upstream)?;
        if !grads.all_finite() {
            return Err(Error::NonFinite(format!("gradient after {} steps", self.adam.steps())));
        }
        self.adam.step(&mut self.weights, &grads, lr)?;
        Ok(loss)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub weights: WeightBank<f32>,
    pub history: Vec<EpochStats>,
    /// Images dropped for being smaller than the patch.
    pub skipped: usize,
}

/// Loss history as `epoch,lr,mean_loss` CSV.
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,lr,mean_loss\n");
    for h in history {
        out.push_str(&format!("{},{},{}\n", h.epoch, h.lr, h.mean_loss));
    }
    out
}

/// Trains `spec` from a seeded initialisation. Each epoch visits the images in a
/// fresh random order, cutting a new random crop per visit. `on_epoch` sees
/// every epoch's statistics as they are produced.
pub fn train_images(
    spec: &ModelSpec,
    images: &[Image],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    spec.validate()?;
    cfg.validate(spec.scale)?;
    let patch = cfg.patch_for(spec.scale);
    let usable: Vec<&Image> = images
        .iter()
        .filter(|im| im.width >= patch && im.height >= patch)
        .collect();
    if usable.is_empty() {
        return Err(Error::invalid(format!("no training image is at least {patch}x{patch}")));
    }
    let mut trainer = Trainer::new(init_weights(spec, cfg.seed)?, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let steps = cfg
        .steps_per_epoch
        .unwrap_or_else(|| usable.len().div_ceil(cfg.minibatch));
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(epoch, cfg);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for step in 0..steps {
            let mut lows = Vec::with_capacity(cfg.minibatch);
            let mut highs = Vec::with_capacity(cfg.minibatch);
            for j in 0..cfg.minibatch {
                let idx = order[(step * cfg.minibatch + j) % order.len()];
                let (l, h) = sample_patch(usable[idx], spec.scale, patch, &mut rng)?;
                lows.push(l);
                highs.push(h);
            }
            total += trainer.step(&Tensor::stack(&lows)?, &Tensor::stack(&highs)?, lr)?;
        }
        let stats = EpochStats {
            epoch,
            lr,
            mean_loss: total / steps as f64,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(TrainOutcome {
        weights: trainer.into_weights(),
        history,
        skipped: images.len() - usable.len(),
    })
}

/// [`train_images`] over every readable image of a directory.
pub fn train_loop(
    spec: &ModelSpec,
    dataset_dir: &Path,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    spec.validate()?;
    trainable(spec)?;
    cfg.validate(spec.scale)?;
    let images = list_images(dataset_dir)?
        .iter()
        .map(|p| load_image(p))
        .collect::<Result<Vec<_>>>()?;
    train_images(spec, &images, cfg, on_epoch)
}
