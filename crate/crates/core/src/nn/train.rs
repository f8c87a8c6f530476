use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use super::checkpoint::LOSS_TAIL;
use super::layers::{mse, mse_backward, Exec};
use super::{AdamParams, AdamState, Checkpoint, Model, NetworkProfile, Tensor, TrainingMeta};
use crate::dataset::{load_pair, make_input_image, read_manifest, Image};
use crate::error::{Error, Result};
use crate::fem::{DensityField, Grid};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: AdamParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            seed: 42,
            optimizer: AdamParams::default(),
        }
    }
}

/// One `R × R` input/target pair, pixels row-major from the top-left.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Vec<f32>,
    pub target: Vec<f32>,
}

impl Sample {
    pub fn from_images(input: &Image, target: &Image) -> Result<Self> {
        if (input.width(), input.height()) != (target.width(), target.height()) {
            return Err(Error::shape(
                format!("{}x{} target", input.width(), input.height()),
                format!("{}x{}", target.width(), target.height()),
            ));
        }
        let f = |img: &Image| img.pixels().iter().map(|&v| v as f32).collect();
        Ok(Self {
            input: f(input),
            target: f(target),
        })
    }
}

/// Loads every pair of a manifest, requiring `R × R` images.
pub fn load_training_set(manifest_path: &Path, profile: &NetworkProfile) -> Result<Vec<Sample>> {
    let manifest = read_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let r = profile.input_size;
    manifest
        .records
        .iter()
        .map(|rec| {
            let (input, target) = load_pair(dir, rec)?;
            if input.width() != r || input.height() != r {
                return Err(Error::shape(
                    format!("{r}x{r} images for the profile"),
                    format!("{}x{} at vf={}", input.width(), input.height(), rec.vf),
                ));
            }
            Sample::from_images(&input, &target)
        })
        .collect()
}

/// Trains a fresh He-initialized model with batch size 1 and returns the
/// checkpoint and the mean loss of every epoch. `on_epoch` sees
/// `(epoch, mean loss)` as training proceeds.
pub fn train_with(
    profile: &NetworkProfile,
    samples: &[Sample],
    cfg: &TrainConfig,
    exec: Exec,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(Checkpoint, Vec<f64>)> {
    profile.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let r2 = profile.input_size.pow(2);
    if let Some(s) = samples.iter().find(|s| s.input.len() != r2 || s.target.len() != r2) {
        return Err(Error::shape(format!("{r2} pixels per image"), s.input.len()));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
    let mut model = Model::he_uniform(profile.clone(), &mut rng)?;
    let mut adam = AdamState::new(model.params().len(), cfg.optimizer);
    let mut grads = vec![0.0f32; model.params().len()];
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (batch, &i) in order.iter().enumerate() {
            let s = &samples[i];
            let at = |e: Error| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("epoch {epoch}, batch {batch}: {m}")),
                other => other,
            };
            let trace = model.forward_trace(&s.input, exec).map_err(at)?;
            let loss = mse(trace.output(), &s.target)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("epoch {epoch}, batch {batch}: loss {loss}")));
            }
            total += loss;
            let d_out = mse_backward(trace.output(), &s.target)?;
            grads.iter_mut().for_each(|g| *g = 0.0);
            model.backward(&trace, &d_out, &mut grads, exec)?;
            adam.step(model.params_mut(), &grads)?;
        }
        let mean = total / samples.len() as f64;
        on_epoch(epoch, mean);
        losses.push(mean);
    }
    let meta = TrainingMeta {
        seed: cfg.seed,
        epochs: cfg.epochs,
        optimizer: cfg.optimizer,
        loss_tail: losses[losses.len().saturating_sub(LOSS_TAIL)..].to_vec(),
    };
    Ok((Checkpoint { model, meta }, losses))
}

pub fn train(profile: &NetworkProfile, samples: &[Sample], cfg: &TrainConfig, exec: Exec) -> Result<(Checkpoint, Vec<f64>)> {
    train_with(profile, samples, cfg, exec, |_, _| {})
}

/// Predicted design for volume fraction `vf`, clamped into `[0, 1]`.
pub fn infer(model: &Model, vf: f64) -> Result<DensityField> {
    let r = model.profile().input_size;
    let img = make_input_image(vf, r, r)?;
    let input = Tensor::new(vec![r, r, 1], img.pixels().iter().map(|&v| v as f32).collect())?;
    let out = model.forward(&input, Exec::Serial)?;
    DensityField::clamped(Grid::new(r, r)?, out.data().iter().map(|&v| v as f64).collect())
}
