use candle_core::Tensor;
use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uidiff_core::wireframe::render_wireframe;
use uidiff_core::Layout;

use super::model::UiModel;
use crate::nn::randn;
use crate::Result;

pub const DEFAULT_STEPS: usize = 50;

/// Deterministic DDIM sampling through the control path, decoded to a
/// full-size image.
pub fn generate_ui(model: &UiModel, prompt: &str, layout: &Layout, seed: u64, steps: usize) -> Result<RgbImage> {
    let wf = render_wireframe(layout, &model.palette, model.cfg.image_w, model.cfg.image_h)?;
    let wf = model.images_to_tensor(&[&wf])?;
    let text = model.encode_text(prompt)?;
    let z = ddim(model, seed, steps, |z, t| {
        model.control_denoise_step(z, &[t], &text, &wf)
    })?;
    decode(model, &z)
}

/// Same sampler with the base denoiser alone; no wireframe.
pub fn generate_base(model: &UiModel, prompt: &str, seed: u64, steps: usize) -> Result<RgbImage> {
    let text = model.encode_text(prompt)?;
    let z = ddim(model, seed, steps, |z, t| model.base_denoise_step(z, &[t], &text))?;
    decode(model, &z)
}

fn decode(model: &UiModel, z: &Tensor) -> Result<RgbImage> {
    model.tensor_to_image(&model.decode_latents(z)?.squeeze(0)?)
}

fn ddim(
    model: &UiModel,
    seed: u64,
    steps: usize,
    eps_fn: impl Fn(&Tensor, usize) -> Result<Tensor>,
) -> Result<Tensor> {
    let (h, w) = model.cfg.latent_hw();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = randn(&mut rng, &[1, model.cfg.latent_channels, h, w], model.dtype(), model.device())?;
    let grid = model.schedule.ddim_timesteps(steps);
    for pair in grid.windows(2) {
        let (t, s) = (pair[0], pair[1]);
        let eps = eps_fn(&z, t)?.detach();
        let (ab_t, ab_s) = (model.schedule.alpha_bar(t), model.schedule.alpha_bar(s));
        let x0 = ((&z - (&eps * (1.0 - ab_t).sqrt())?)? / ab_t.sqrt())?;
        z = ((x0 * ab_s.sqrt())? + (eps * (1.0 - ab_s).sqrt())?)?.detach();
    }
    Ok(z)
}
