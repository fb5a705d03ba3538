use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;

use candle_core::{DType, Device, Tensor};
use image::RgbImage;
use serde::{Deserialize, Serialize};
use uidiff_core::wireframe::{Palette, PALETTE_VERSION};

use super::config::UiModelConfig;
use super::net::{Codec, ControlBranch, Denoiser};
use super::schedule::NoiseSchedule;
use super::text::TextEncoder;
use crate::checkpoint;
use crate::nn::{ParamSource, ParamStore};
use crate::{ModelError, Result};

pub const CHECKPOINT_KIND: &str = "ui-diffusion";
pub const CONTROL_CHECKPOINT_KIND: &str = "ui-control";

/// Parameter prefixes of the components that stay locked while the control
/// branch is fine-tuned.
pub const FROZEN_COMPONENTS: [&str; 3] = ["text", "unet", "codec"];
pub const CONTROL_PREFIX: &str = "control.";

/// Text encoder, latent denoiser, image codec and control branch sharing one
/// parameter store (prefixes `text.`, `unet.`, `codec.`, `control.`).
pub struct UiModel {
    pub cfg: UiModelConfig,
    pub schedule: NoiseSchedule,
    pub store: ParamStore,
    pub palette: Palette,
    pub text: TextEncoder,
    pub codec: Codec,
    pub denoiser: Denoiser,
    pub control: ControlBranch,
    /// Multiplier bringing codec latents to roughly unit variance.
    pub latent_scale: f64,
    pub base_steps: u64,
    pub control_steps: u64,
    text_cache: Mutex<HashMap<String, Tensor>>,
    dtype: DType,
    device: Device,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: UiModelConfig,
    pub latent_scale: f64,
    pub base_steps: u64,
    pub control_steps: u64,
    /// Component prefix → parameter hash.
    pub frozen: BTreeMap<String, String>,
    pub tokenizer: String,
    pub schedule: String,
    pub palette_version: String,
}

impl UiModel {
    /// Fresh toy model: random base, control branch cloned from the base
    /// encoder with zeroed injection convolutions.
    pub fn new(cfg: UiModelConfig, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        cfg.validate().map_err(ModelError::ShapeMismatch)?;
        let mut base = ParamSource::random(seed);
        let mut store = ParamStore::new();
        let parts = build_base(&mut base, &mut store, &cfg, true, dtype, device)?;
        let control = fresh_control(&mut store, &cfg, seed, dtype, device)?;
        Self::assemble(cfg, store, parts, control, 1.0, dtype, device)
    }

    fn assemble(
        cfg: UiModelConfig,
        store: ParamStore,
        (text, codec, denoiser): (TextEncoder, Codec, Denoiser),
        control: ControlBranch,
        latent_scale: f64,
        dtype: DType,
        device: &Device,
    ) -> Result<Self> {
        Ok(Self {
            schedule: NoiseSchedule::new(cfg.schedule),
            cfg,
            store,
            palette: Palette::v1(),
            text,
            codec,
            denoiser,
            control,
            latent_scale,
            base_steps: 0,
            control_steps: 0,
            text_cache: Mutex::new(HashMap::new()),
            dtype,
            device: device.clone(),
        })
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    /// Rebuilds with the base components as plain (non-trainable) tensors.
    pub fn freeze_base(self) -> Result<Self> {
        let (control, base): (HashMap<_, _>, HashMap<_, _>) = self
            .store
            .snapshot("")?
            .into_iter()
            .partition(|(k, _)| k.starts_with(CONTROL_PREFIX));
        let mut out = Self::from_tensors(self.cfg, base, Some(control), false, &self.device)?;
        out.latent_scale = self.latent_scale;
        out.base_steps = self.base_steps;
        out.control_steps = self.control_steps;
        Ok(out)
    }

    /// Replaces the control branch with a fresh copy of the current base
    /// encoder. The result reproduces the base model exactly.
    pub fn reset_control(&mut self, seed: u64) -> Result<()> {
        self.rebuild_control(None, seed)?;
        self.control_steps = 0;
        Ok(())
    }

    /// Rebuilds the store keeping the base tensors (and their trainability)
    /// and installing either `control` or a fresh branch.
    fn rebuild_control(&mut self, control: Option<HashMap<String, Tensor>>, seed: u64) -> Result<()> {
        let trainable_base = FROZEN_COMPONENTS
            .iter()
            .any(|c| !self.store.vars_with_prefix(&format!("{c}.")).is_empty());
        let base: HashMap<String, Tensor> = self
            .store
            .snapshot("")?
            .into_iter()
            .filter(|(k, _)| !k.starts_with(CONTROL_PREFIX))
            .collect();
        let mut store = ParamStore::new();
        let mut src = ParamSource::load(base);
        let parts = build_base(&mut src, &mut store, &self.cfg, trainable_base, self.dtype, &self.device)?;
        let control = match control {
            Some(map) => load_control_tensors(map, &mut store, &self.cfg, self.dtype, &self.device)?,
            None => fresh_control(&mut store, &self.cfg, seed, self.dtype, &self.device)?,
        };
        self.store = store;
        self.text = parts.0;
        self.codec = parts.1;
        self.denoiser = parts.2;
        self.control = control;
        Ok(())
    }

    fn from_tensors(
        cfg: UiModelConfig,
        base: HashMap<String, Tensor>,
        control: Option<HashMap<String, Tensor>>,
        trainable_base: bool,
        device: &Device,
    ) -> Result<Self> {
        cfg.validate().map_err(ModelError::ShapeMismatch)?;
        let dtype = base.values().next().map(|t| t.dtype()).unwrap_or(DType::F32);
        let mut store = ParamStore::new();
        let mut src = ParamSource::load(base);
        let parts = build_base(&mut src, &mut store, &cfg, trainable_base, dtype, device)?;
        let leftover = src.leftover();
        if !leftover.is_empty() {
            return Err(ModelError::Checkpoint(format!("unexpected tensors {leftover:?}")));
        }
        let control = match control {
            Some(map) => load_control_tensors(map, &mut store, &cfg, dtype, device)?,
            None => fresh_control(&mut store, &cfg, 0, dtype, device)?,
        };
        Self::assemble(cfg, store, parts, control, 1.0, dtype, device)
    }

    /// Hash of every frozen component, keyed by prefix.
    pub fn frozen_hashes(&self) -> Result<BTreeMap<String, String>> {
        FROZEN_COMPONENTS
            .iter()
            .map(|c| Ok((c.to_string(), self.store.hash(&format!("{c}."))?)))
            .collect()
    }

    pub fn control_hash(&self) -> Result<String> {
        self.store.hash(CONTROL_PREFIX)
    }

    fn meta(&self) -> Result<CheckpointMeta> {
        Ok(CheckpointMeta {
            config: self.cfg,
            latent_scale: self.latent_scale,
            base_steps: self.base_steps,
            control_steps: self.control_steps,
            frozen: self.frozen_hashes()?,
            tokenizer: self.cfg.text.hash(),
            schedule: self.schedule.hash(),
            palette_version: PALETTE_VERSION.to_string(),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        checkpoint::to_bytes(CHECKPOINT_KIND, &self.meta()?, self.store.tensors())
    }

    /// Full checkpoint: every component plus the hash manifest.
    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, CHECKPOINT_KIND, &self.meta()?, self.store.tensors())
    }

    /// Control parameters only, with the hashes of the base they were
    /// trained against.
    pub fn save_control(&self, path: &Path) -> Result<()> {
        let control: BTreeMap<&String, &Tensor> = self
            .store
            .tensors()
            .iter()
            .filter(|(k, _)| k.starts_with(CONTROL_PREFIX))
            .collect();
        checkpoint::save(path, CONTROL_CHECKPOINT_KIND, &self.meta()?, control)
    }

    /// Loads a full checkpoint with the base frozen.
    pub fn load(path: &Path, device: &Device) -> Result<Self> {
        let ck = checkpoint::load::<CheckpointMeta>(path, CHECKPOINT_KIND, device)?;
        Self::from_checkpoint(ck, device)
    }

    pub fn from_bytes(bytes: &[u8], device: &Device) -> Result<Self> {
        let ck = checkpoint::from_bytes::<CheckpointMeta>(bytes, CHECKPOINT_KIND, device)?;
        Self::from_checkpoint(ck, device)
    }

    fn from_checkpoint(ck: checkpoint::Checkpoint<CheckpointMeta>, device: &Device) -> Result<Self> {
        let meta = ck.meta;
        let (control, base): (HashMap<_, _>, HashMap<_, _>) = ck
            .tensors
            .into_iter()
            .partition(|(k, _)| k.starts_with(CONTROL_PREFIX));
        let mut m = Self::from_tensors(meta.config, base, Some(control), false, device)?;
        m.latent_scale = meta.latent_scale;
        m.base_steps = meta.base_steps;
        m.control_steps = meta.control_steps;
        m.check_meta(&meta)?;
        Ok(m)
    }

    /// Swaps in control parameters from a control-only checkpoint, refusing
    /// ones trained against a different base.
    pub fn load_control(&mut self, path: &Path) -> Result<()> {
        let ck = checkpoint::load::<CheckpointMeta>(path, CONTROL_CHECKPOINT_KIND, &self.device)?;
        if ck.meta.config != self.cfg {
            return Err(ModelError::CheckpointMismatch {
                what: "model config".into(),
                expected: format!("{:?}", self.cfg),
                found: format!("{:?}", ck.meta.config),
            });
        }
        self.check_meta(&ck.meta)?;
        self.rebuild_control(Some(ck.tensors), 0)?;
        self.control_steps = ck.meta.control_steps;
        Ok(())
    }

    fn check_meta(&self, meta: &CheckpointMeta) -> Result<()> {
        let mismatch = |what: &str, expected: &str, found: &str| {
            if expected == found {
                Ok(())
            } else {
                Err(ModelError::CheckpointMismatch {
                    what: what.into(),
                    expected: expected.into(),
                    found: found.into(),
                })
            }
        };
        mismatch("tokenizer", &self.cfg.text.hash(), &meta.tokenizer)?;
        mismatch("schedule", &self.schedule.hash(), &meta.schedule)?;
        mismatch("palette", PALETTE_VERSION, &meta.palette_version)?;
        let ours = self.frozen_hashes()?;
        for (component, hash) in &meta.frozen {
            let found = ours.get(component).map(String::as_str).unwrap_or("absent");
            mismatch(&format!("{component} parameters"), hash, found)?;
        }
        Ok(())
    }

    /// Loads production-scale weights from `dir/config.json` and
    /// `dir/model.safetensors` (plain safetensors, names as in our
    /// checkpoints). Control tensors absent from the file start fresh.
    pub fn from_adapter(dir: &Path, device: &Device) -> Result<Self> {
        let config_path = dir.join("config.json");
        let weights_path = dir.join("model.safetensors");
        for p in [&config_path, &weights_path] {
            if !p.exists() {
                return Err(ModelError::AdapterUnavailable(format!(
                    "{} not found; the pretrained profile needs externally supplied weights",
                    p.display()
                )));
            }
        }
        let text = std::fs::read_to_string(&config_path).map_err(|e| ModelError::io(&config_path, e))?;
        #[derive(Deserialize)]
        struct AdapterConfig {
            config: UiModelConfig,
            #[serde(default = "one")]
            latent_scale: f64,
        }
        fn one() -> f64 {
            1.0
        }
        let ac: AdapterConfig = serde_json::from_str(&text)
            .map_err(|e| ModelError::AdapterUnavailable(format!("{}: {e}", config_path.display())))?;
        let tensors = candle_core::safetensors::load(&weights_path, device)?;
        let (control, base): (HashMap<_, _>, HashMap<_, _>) = tensors
            .into_iter()
            .partition(|(k, _)| k.starts_with(CONTROL_PREFIX));
        let mut m = Self::from_tensors(ac.config, base, None, false, device)?;
        if !control.is_empty() {
            m.rebuild_control(Some(control), 0)?;
        }
        m.latent_scale = ac.latent_scale;
        Ok(m)
    }

    /// `[1, L, D]` prompt embeddings; cached, since the encoder is frozen.
    pub fn encode_text(&self, prompt: &str) -> Result<Tensor> {
        if let Some(t) = self.text_cache.lock().expect("cache lock").get(prompt) {
            return Ok(t.clone());
        }
        let t = self.text.encode(&[prompt])?.detach();
        self.text_cache
            .lock()
            .expect("cache lock")
            .insert(prompt.to_string(), t.clone());
        Ok(t)
    }

    pub(crate) fn clear_text_cache(&self) {
        self.text_cache.lock().expect("cache lock").clear();
    }

    /// `[N, 3, H, W]` in `[0, 1]`.
    pub fn images_to_tensor(&self, images: &[&RgbImage]) -> Result<Tensor> {
        let (w, h) = (self.cfg.image_w, self.cfg.image_h);
        let mut v = Vec::with_capacity(images.len() * 3 * (w * h) as usize);
        for img in images {
            if img.dimensions() != (w, h) {
                return Err(ModelError::ShapeMismatch(format!(
                    "image is {}x{}, model expects {w}x{h}",
                    img.width(),
                    img.height()
                )));
            }
            for c in 0..3 {
                v.extend(img.pixels().map(|p| p[c] as f32 / 255.0));
            }
        }
        Ok(Tensor::from_vec(v, (images.len(), 3, h as usize, w as usize), &self.device)?
            .to_dtype(self.dtype)?)
    }

    /// Inverse of [`Self::images_to_tensor`] for one `[3, H, W]` tensor.
    pub fn tensor_to_image(&self, t: &Tensor) -> Result<RgbImage> {
        let (_, h, w) = t.dims3()?;
        let v = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
        let plane = h * w;
        let px = |c: usize, i: usize| (v[c * plane + i].clamp(0.0, 1.0) * 255.0).round() as u8;
        Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let i = y as usize * w + x as usize;
            image::Rgb([px(0, i), px(1, i), px(2, i)])
        }))
    }

    /// Scaled latents of a batch of images.
    pub fn encode_latents(&self, images: &Tensor) -> Result<Tensor> {
        Ok((self.codec.encode(images)? * self.latent_scale)?)
    }

    pub fn decode_latents(&self, z: &Tensor) -> Result<Tensor> {
        self.codec.decode(&(z / self.latent_scale)?)
    }

    /// Latent grid and reconstruction of one image.
    pub fn autoencode(&self, image: &RgbImage) -> Result<(Tensor, RgbImage)> {
        let x = self.images_to_tensor(&[image])?;
        let z = self.encode_latents(&x)?;
        let rec = self.decode_latents(&z)?;
        Ok((z.squeeze(0)?, self.tensor_to_image(&rec.squeeze(0)?)?))
    }

    /// Predicted ε. The frozen denoiser runs as usual; the control branch
    /// sees the noisy latent plus the encoded wireframe and its
    /// zero-convolved features are added to the decoder's skip inputs.
    pub fn control_denoise_step(
        &self,
        z: &Tensor,
        t: &[usize],
        text: &Tensor,
        wireframe: &Tensor,
    ) -> Result<Tensor> {
        let (n, c, h, w) = z.dims4()?;
        let (lh, lw) = self.cfg.latent_hw();
        if c != self.cfg.latent_channels || h != lh || w != lw || t.len() != n {
            return Err(ModelError::ShapeMismatch(format!(
                "latent {:?} with {} timesteps for a {}x{}x{} model",
                z.dims(),
                t.len(),
                self.cfg.latent_channels,
                lh,
                lw
            )));
        }
        let (wn, _, wh, ww) = wireframe.dims4()?;
        if wn != n || wh != self.cfg.image_h as usize || ww != self.cfg.image_w as usize {
            return Err(ModelError::ShapeMismatch(format!(
                "wireframe {:?} for latent batch {n}",
                wireframe.dims()
            )));
        }
        let residuals = self.control.forward(z, t, text, wireframe)?;
        self.denoiser.forward_with(z, t, text, Some(&residuals))
    }

    /// Predicted ε of the base model alone.
    pub fn base_denoise_step(&self, z: &Tensor, t: &[usize], text: &Tensor) -> Result<Tensor> {
        self.denoiser.forward(z, t, text)
    }
}

type BaseParts = (TextEncoder, Codec, Denoiser);

fn build_base(
    src: &mut ParamSource,
    store: &mut ParamStore,
    cfg: &UiModelConfig,
    trainable: bool,
    dtype: DType,
    device: &Device,
) -> Result<BaseParts> {
    let text = {
        let mut b = src.builder(store, "text", trainable, dtype, device);
        TextEncoder::new(&mut b, cfg.text, cfg.text_dim, cfg.text_heads)?
    };
    let codec = {
        let mut b = src.builder(store, "codec", trainable, dtype, device);
        Codec::new(&mut b, cfg)?
    };
    let denoiser = {
        let mut b = src.builder(store, "unet", trainable, dtype, device);
        Denoiser::new(&mut b, cfg)?
    };
    Ok((text, codec, denoiser))
}

/// Control branch whose encoder copies `unet.enc.*` from `store`; hint
/// layers are seeded, injection convolutions are zero.
fn fresh_control(
    store: &mut ParamStore,
    cfg: &UiModelConfig,
    seed: u64,
    dtype: DType,
    device: &Device,
) -> Result<ControlBranch> {
    let copied = store
        .snapshot("unet.enc.")?
        .into_iter()
        .map(|(k, t)| (format!("control.{}", &k["unet.".len()..]), t))
        .collect();
    let mut src = ParamSource::load_or_random(copied, seed ^ 0x5eed_c0de);
    let control = {
        let mut b = src.builder(store, "control", true, dtype, device);
        ControlBranch::new(&mut b, cfg)?
    };
    let leftover = src.leftover();
    if !leftover.is_empty() {
        return Err(ModelError::Checkpoint(format!("control copy left {leftover:?}")));
    }
    Ok(control)
}

fn load_control_tensors(
    map: HashMap<String, Tensor>,
    store: &mut ParamStore,
    cfg: &UiModelConfig,
    dtype: DType,
    device: &Device,
) -> Result<ControlBranch> {
    let mut src = ParamSource::load(map);
    let control = {
        let mut b = src.builder(store, "control", true, dtype, device);
        ControlBranch::new(&mut b, cfg)?
    };
    let leftover = src.leftover();
    if !leftover.is_empty() {
        return Err(ModelError::Checkpoint(format!("unexpected tensors {leftover:?}")));
    }
    Ok(control)
}
