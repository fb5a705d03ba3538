use std::collections::{BTreeMap, HashMap};

use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uidiff_core::ingest::{apply_prompt_dropout, TrainingRecord, DEFAULT_PROMPT};

use super::model::{UiModel, CONTROL_PREFIX};
use crate::nn::{randn, scalar};
use crate::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub prompt_dropout: f64,
    pub seed: u64,
    /// Overrides `epochs` with an exact step count.
    pub max_steps: Option<usize>,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 4,
            learning_rate: 1e-5,
            weight_decay: 0.01,
            prompt_dropout: 0.5,
            seed: 0,
            max_steps: None,
        }
    }
}

impl FinetuneConfig {
    pub fn total_steps(&self, records: usize) -> usize {
        self.max_steps
            .unwrap_or_else(|| self.epochs * records.div_ceil(self.batch_size.max(1)))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FinetuneLog {
    pub losses: Vec<f64>,
    pub frozen_before: BTreeMap<String, String>,
    pub frozen_after: BTreeMap<String, String>,
    pub control_before: String,
    pub control_after: String,
}

impl FinetuneLog {
    /// Trailing mean over `window` steps ending at `step` (inclusive).
    pub fn smoothed(&self, step: usize, window: usize) -> f64 {
        smoothed(&self.losses, step, window)
    }
}

pub(crate) fn smoothed(losses: &[f64], step: usize, window: usize) -> f64 {
    let end = (step + 1).min(losses.len());
    let start = end.saturating_sub(window.max(1));
    let slice = &losses[start..end];
    slice.iter().sum::<f64>() / slice.len().max(1) as f64
}

fn mse(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    Ok((a - b)?.sqr()?.mean_all()?)
}

/// ε-prediction MSE through the control path. `z0` are scaled latents.
pub fn control_mse(
    model: &UiModel,
    z0: &Tensor,
    t: &[usize],
    eps: &Tensor,
    text: &Tensor,
    wireframe: &Tensor,
) -> Result<Tensor> {
    let zt = model.schedule.add_noise(z0, t, eps)?;
    let pred = model.control_denoise_step(&zt, t, text, wireframe)?;
    mse(&pred, eps)
}

/// ε-prediction MSE of the base denoiser alone.
pub fn base_mse(model: &UiModel, z0: &Tensor, t: &[usize], eps: &Tensor, text: &Tensor) -> Result<Tensor> {
    let zt = model.schedule.add_noise(z0, t, eps)?;
    let pred = model.base_denoise_step(&zt, t, text)?;
    mse(&pred, eps)
}

fn check_finite(value: f64, step: usize, batch: &[&TrainingRecord]) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonFiniteLoss {
            step,
            loss: value,
            batch: batch.iter().map(|r| r.source_id.clone()).collect(),
        })
    }
}

fn optimizer(vars: Vec<candle_core::Var>, lr: f64, weight_decay: f64) -> Result<AdamW> {
    Ok(AdamW::new(
        vars,
        ParamsAdamW {
            lr,
            weight_decay,
            ..ParamsAdamW::default()
        },
    )?)
}

/// Seeded epoch-wise shuffling, delivered in fixed batches.
struct Batches {
    order: Vec<usize>,
    pos: usize,
    n: usize,
}

impl Batches {
    fn new(n: usize) -> Self {
        Self {
            order: Vec::new(),
            pos: 0,
            n,
        }
    }

    fn next(&mut self, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order = (0..self.n).collect();
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Trains the control branch only. Frozen hashes are taken before and after;
/// any difference is a [`ModelError::FrozenDrift`].
pub fn finetune_control(
    model: &mut UiModel,
    records: &[TrainingRecord],
    cfg: &FinetuneConfig,
    mut on_step: impl FnMut(usize, f64),
) -> Result<FinetuneLog> {
    if records.is_empty() {
        return Err(ModelError::Data("no training records".into()));
    }
    let frozen_before = model.frozen_hashes()?;
    let control_before = model.control_hash()?;
    let mut opt = optimizer(
        model.store.vars_with_prefix(CONTROL_PREFIX),
        cfg.learning_rate,
        cfg.weight_decay,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut batches = Batches::new(records.len());
    let mut latents: HashMap<usize, Tensor> = HashMap::new();
    let (lh, lw) = model.cfg.latent_hw();
    let c = model.cfg.latent_channels;
    let t_max = model.schedule.timesteps();
    model.encode_text(DEFAULT_PROMPT)?;
    let mut losses = Vec::new();
    for step in 0..cfg.total_steps(records.len()) {
        let idx = batches.next(cfg.batch_size.max(1), &mut rng);
        let batch: Vec<&TrainingRecord> = idx.iter().map(|&i| &records[i]).collect();
        let mut texts = Vec::with_capacity(idx.len());
        let mut z0 = Vec::with_capacity(idx.len());
        for (&i, rec) in idx.iter().zip(&batch) {
            let prompt = apply_prompt_dropout(&rec.caption, cfg.prompt_dropout, &mut rng);
            texts.push(model.encode_text(&prompt)?);
            if !latents.contains_key(&i) {
                let x = model.images_to_tensor(&[&rec.image])?;
                latents.insert(i, model.encode_latents(&x)?.detach());
            }
            z0.push(latents[&i].clone());
        }
        let text = Tensor::cat(&texts, 0)?;
        let z0 = Tensor::cat(&z0, 0)?;
        let wf = model.images_to_tensor(&batch.iter().map(|r| &r.conditioning).collect::<Vec<_>>())?;
        let t: Vec<usize> = idx.iter().map(|_| rng.random_range(1..=t_max)).collect();
        let eps = randn(&mut rng, &[idx.len(), c, lh, lw], model.dtype(), model.device())?;
        let loss = control_mse(model, &z0, &t, &eps, &text, &wf)?;
        let value = scalar(&loss)?;
        check_finite(value, step, &batch)?;
        opt.backward_step(&loss)?;
        model.control_steps += 1;
        on_step(step, value);
        losses.push(value);
    }
    let frozen_after = model.frozen_hashes()?;
    let drifted: Vec<String> = frozen_before
        .iter()
        .filter(|(k, v)| frozen_after.get(*k) != Some(v))
        .map(|(k, _)| k.clone())
        .collect();
    if !drifted.is_empty() {
        return Err(ModelError::FrozenDrift(drifted));
    }
    Ok(FinetuneLog {
        losses,
        frozen_before,
        frozen_after,
        control_before,
        control_after: model.control_hash()?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub codec_steps: usize,
    pub denoiser_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Caption dropout while training the base, so the default prompt is
    /// in-distribution later.
    pub prompt_dropout: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            codec_steps: 300,
            denoiser_steps: 300,
            batch_size: 4,
            learning_rate: 2e-3,
            prompt_dropout: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainLog {
    pub codec: Vec<f64>,
    pub denoiser: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PretrainPhase {
    Codec,
    Denoiser,
}

/// Toy-profile base training: the codec on reconstruction, then the
/// denoiser and text encoder jointly on ε-prediction. Ends with a fresh
/// control branch copied from the trained encoder.
pub fn pretrain_toy(
    model: &mut UiModel,
    records: &[TrainingRecord],
    cfg: &PretrainConfig,
    mut on_step: impl FnMut(PretrainPhase, usize, f64),
) -> Result<PretrainLog> {
    if records.is_empty() {
        return Err(ModelError::Data("no training records".into()));
    }
    if model.store.vars_with_prefix("codec.").is_empty() {
        return Err(ModelError::Data("base components are frozen".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut batches = Batches::new(records.len());
    let bs = cfg.batch_size.max(1);
    let mut log = PretrainLog::default();

    let mut opt = optimizer(model.store.vars_with_prefix("codec."), cfg.learning_rate, 0.0)?;
    for step in 0..cfg.codec_steps {
        let batch: Vec<&TrainingRecord> = batches.next(bs, &mut rng).into_iter().map(|i| &records[i]).collect();
        let x = model.images_to_tensor(&batch.iter().map(|r| &r.image).collect::<Vec<_>>())?;
        let loss = mse(&model.codec.decode(&model.codec.encode(&x)?)?, &x)?;
        let value = scalar(&loss)?;
        check_finite(value, step, &batch)?;
        opt.backward_step(&loss)?;
        on_step(PretrainPhase::Codec, step, value);
        log.codec.push(value);
    }

    let probe: Vec<&image::RgbImage> = records.iter().take(16).map(|r| &r.image).collect();
    let z = model.codec.encode(&model.images_to_tensor(&probe)?)?;
    let mean = scalar(&z.mean_all()?)?;
    let std = scalar(&(z - mean)?.sqr()?.mean_all()?)?.sqrt();
    model.latent_scale = if std > 1e-8 { 1.0 / std } else { 1.0 };

    let mut vars = model.store.vars_with_prefix("unet.");
    vars.extend(model.store.vars_with_prefix("text."));
    let mut opt = optimizer(vars, cfg.learning_rate, 0.0)?;
    let (lh, lw) = model.cfg.latent_hw();
    let c = model.cfg.latent_channels;
    let t_max = model.schedule.timesteps();
    let mut latents: HashMap<usize, Tensor> = HashMap::new();
    for step in 0..cfg.denoiser_steps {
        let idx = batches.next(bs, &mut rng);
        let batch: Vec<&TrainingRecord> = idx.iter().map(|&i| &records[i]).collect();
        let mut z0 = Vec::with_capacity(bs);
        for (&i, rec) in idx.iter().zip(&batch) {
            if !latents.contains_key(&i) {
                let x = model.images_to_tensor(&[&rec.image])?;
                latents.insert(i, model.encode_latents(&x)?.detach());
            }
            z0.push(latents[&i].clone());
        }
        let z0 = Tensor::cat(&z0, 0)?;
        let prompts: Vec<String> = batch
            .iter()
            .map(|r| apply_prompt_dropout(&r.caption, cfg.prompt_dropout, &mut rng))
            .collect();
        let text = model.text.encode(&prompts.iter().map(String::as_str).collect::<Vec<_>>())?;
        let t: Vec<usize> = idx.iter().map(|_| rng.random_range(1..=t_max)).collect();
        let eps = randn(&mut rng, &[idx.len(), c, lh, lw], model.dtype(), model.device())?;
        let loss = base_mse(model, &z0, &t, &eps, &text)?;
        let value = scalar(&loss)?;
        check_finite(value, step, &batch)?;
        opt.backward_step(&loss)?;
        model.base_steps += 1;
        on_step(PretrainPhase::Denoiser, step, value);
        log.denoiser.push(value);
    }
    model.clear_text_cache();
    model.reset_control(cfg.seed)?;
    Ok(log)
}
