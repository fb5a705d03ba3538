use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uidiff_core::layout::TokenizerConfig;
use uidiff_core::{BBox, ComponentCategory, Layout, TokenSequence};
use uidiff_models::layout_diffusion::{corrupt, masked_cross_entropy, LayoutDenoiser, LayoutModelConfig};
use uidiff_models::nn::{randn, scalar, ParamStore};
use uidiff_models::ui_diffusion::{control_mse, UiModel, UiModelConfig};
use uidiff_models::{DType, Device, Tensor};

pub const SAMPLES: usize = 24;

/// Central differences on `SAMPLES` scalars drawn from the trainable
/// parameters under `prefix`; returns the worst relative error and the
/// number of parameters compared.
fn check(store: &ParamStore, prefix: &str, seed: u64, loss: impl Fn() -> Tensor) -> (f64, usize) {
    let l = loss();
    let grads = l.backward().unwrap();
    let names: Vec<String> = store
        .names()
        .filter(|n| n.starts_with(prefix) && store.var(n).is_some())
        .map(String::from)
        .collect();
    assert!(!names.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut tries = 0;
    while checked < SAMPLES {
        tries += 1;
        assert!(tries < 50 * SAMPLES, "too few parameters with a gradient");
        let name = &names[rng.random_range(0..names.len())];
        let var = store.var(name).unwrap();
        let n = var.as_tensor().elem_count();
        let i = rng.random_range(0..n);
        let analytic = match grads.get(var.as_tensor()) {
            Some(g) => g.flatten_all().unwrap().to_vec1::<f64>().unwrap()[i],
            None => 0.0,
        };
        let orig = store.get_scalar(name, i).unwrap();
        store.set_scalar(name, i, orig + h).unwrap();
        let up = scalar(&loss()).unwrap();
        store.set_scalar(name, i, orig - h).unwrap();
        let down = scalar(&loss()).unwrap();
        store.set_scalar(name, i, orig).unwrap();
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic.abs().max(numeric.abs());
        if scale < 1e-7 {
            continue;
        }
        let rel = (analytic - numeric).abs() / scale;
        worst = worst.max(rel);
        checked += 1;
    }
    (worst, checked)
}

/// Layout denoiser on a miniature F64 config.
pub fn layout_denoiser() -> (f64, usize) {
    let cfg = LayoutModelConfig {
        tokenizer: TokenizerConfig { e_max: 4, ..TokenizerConfig::default() },
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        ..LayoutModelConfig::default()
    };
    let m = LayoutDenoiser::new(cfg, 11, DType::F64, &Device::Cpu).unwrap();
    let layout = Layout::with_elements(
        288,
        512,
        [
            (ComponentCategory::ICON, BBox::new(0.1, 0.1, 0.2, 0.1)),
            (ComponentCategory::TEXT, BBox::new(0.3, 0.5, 0.5, 0.1)),
        ],
    );
    let clean: TokenSequence = cfg.tokenizer.tokenize(&layout).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let noisy = corrupt(&clean, 70, &cfg.schedule, &cfg.tokenizer, &mut rng);
    let loss = || {
        masked_cross_entropy(&m, &[clean.clone()], &[noisy.clone()], &[70])
            .unwrap()
            .unwrap()
    };
    check(&m.store, "layout.", 5, loss)
}

/// Control branch of a miniature F64 model with its zero layers moved off
/// zero.
pub fn control_branch() -> (f64, usize) {
    let cfg = UiModelConfig::miniature();
    let dev = Device::Cpu;
    let m = UiModel::new(cfg, 3, DType::F64, &dev).unwrap().freeze_base().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let names: Vec<String> = m
        .store
        .names()
        .filter(|n| n.starts_with("control.zero") || n.starts_with("control.hint_out"))
        .map(String::from)
        .collect();
    for n in &names {
        for i in 0..m.store.get(n).unwrap().elem_count() {
            m.store.set_scalar(n, i, rng.random_range(-0.3..0.3)).unwrap();
        }
    }
    let (lh, lw) = cfg.latent_hw();
    let z0 = randn(&mut rng, &[2, cfg.latent_channels, lh, lw], DType::F64, &dev).unwrap();
    let eps = randn(&mut rng, &[2, cfg.latent_channels, lh, lw], DType::F64, &dev).unwrap();
    let wf = Tensor::rand(0f64, 1.0, (2, 3, cfg.image_h as usize, cfg.image_w as usize), &dev).unwrap();
    let text = m.text.encode(&["a login page", "A nice screenshot of a mobile app"]).unwrap();
    let t = [13, 41];
    let loss = || control_mse(&m, &z0, &t, &eps, &text, &wf).unwrap();
    assert!(m.store.vars_with_prefix("unet.").is_empty());
    check(&m.store, "control.", 6, loss)
}
