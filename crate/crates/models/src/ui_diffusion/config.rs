use serde::{Deserialize, Serialize};

use super::schedule::ScheduleConfig;
use super::text::TextTokenizer;

/// Architecture of every UI-diffusion component. The toy profile trains all
/// of it from scratch; the adapter profile reads it from an external
/// `config.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UiModelConfig {
    pub image_w: u32,
    pub image_h: u32,
    /// Pixel-to-latent downsampling factor.
    pub factor: usize,
    pub latent_channels: usize,
    pub codec_hidden: usize,
    pub text: TextTokenizer,
    pub text_dim: usize,
    pub text_heads: usize,
    /// Channels at full latent, half and quarter resolution.
    pub channels: [usize; 3],
    pub groups: usize,
    pub time_dim: usize,
    pub attn_heads: usize,
    pub hint_hidden: usize,
    pub schedule: ScheduleConfig,
}

impl UiModelConfig {
    pub fn toy() -> Self {
        Self {
            image_w: uidiff_core::CANVAS_W,
            image_h: uidiff_core::CANVAS_H,
            factor: 8,
            latent_channels: 4,
            codec_hidden: 64,
            text: TextTokenizer {
                vocab: 1024,
                max_len: 16,
            },
            text_dim: 32,
            text_heads: 2,
            channels: [32, 48, 64],
            groups: 8,
            time_dim: 64,
            attn_heads: 4,
            hint_hidden: 32,
            schedule: ScheduleConfig::default(),
        }
    }

    /// A few thousand parameters on a 32×64 canvas, for gradient checks.
    pub fn miniature() -> Self {
        Self {
            image_w: 32,
            image_h: 64,
            factor: 8,
            latent_channels: 2,
            codec_hidden: 4,
            text: TextTokenizer {
                vocab: 16,
                max_len: 3,
            },
            text_dim: 4,
            text_heads: 1,
            channels: [4, 4, 4],
            groups: 2,
            time_dim: 4,
            attn_heads: 1,
            hint_hidden: 4,
            schedule: ScheduleConfig {
                timesteps: 50,
                ..ScheduleConfig::default()
            },
        }
    }

    pub fn latent_hw(&self) -> (usize, usize) {
        (
            self.image_h as usize / self.factor,
            self.image_w as usize / self.factor,
        )
    }

    pub fn validate(&self) -> Result<(), String> {
        let (h, w) = self.latent_hw();
        if self.image_h as usize % self.factor != 0 || self.image_w as usize % self.factor != 0 {
            return Err(format!("image is not divisible by {}", self.factor));
        }
        if h % 4 != 0 || w % 4 != 0 {
            return Err(format!("latent {h}x{w} cannot be halved twice"));
        }
        if self.channels.iter().any(|c| c % self.groups != 0) {
            return Err("channel counts must be multiples of groups".into());
        }
        Ok(())
    }
}
