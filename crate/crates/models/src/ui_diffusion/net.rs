use candle_core::Tensor;

use super::config::UiModelConfig;
use crate::nn::{
    depth_to_space, space_to_depth, timestep_embedding, upsample2, Attention, Builder, Conv,
    GroupNorm, LayerNorm, Linear,
};
use crate::Result;

/// Deterministic convolutional autoencoder, pixels in `[0, 1]`.
pub struct Codec {
    factor: usize,
    enc: [Conv; 4],
    dec: [Conv; 4],
}

impl Codec {
    pub fn new(b: &mut Builder, cfg: &UiModelConfig) -> Result<Self> {
        let c_px = 3 * cfg.factor * cfg.factor;
        let h = cfg.codec_hidden;
        let z = cfg.latent_channels;
        Ok(Self {
            factor: cfg.factor,
            enc: [
                Conv::new(&mut b.sub("enc0"), c_px, h, 1)?,
                Conv::new(&mut b.sub("enc1"), h, h, 3)?,
                Conv::new(&mut b.sub("enc2"), h, h, 3)?,
                Conv::new(&mut b.sub("enc3"), h, z, 1)?,
            ],
            dec: [
                Conv::new(&mut b.sub("dec0"), z, h, 1)?,
                Conv::new(&mut b.sub("dec1"), h, h, 3)?,
                Conv::new(&mut b.sub("dec2"), h, h, 3)?,
                Conv::new(&mut b.sub("dec3"), h, c_px, 1)?,
            ],
        })
    }

    /// `[B, 3, H, W]` → `[B, C, H/f, W/f]`, unscaled.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = space_to_depth(&((x * 2.0)? - 1.0)?, self.factor)?;
        for (i, conv) in self.enc.iter().enumerate() {
            h = conv.forward(&h)?;
            if i < 3 {
                h = h.silu()?;
            }
        }
        Ok(h)
    }

    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        let mut h = z.clone();
        for (i, conv) in self.dec.iter().enumerate() {
            h = conv.forward(&h)?;
            if i < 3 {
                h = h.silu()?;
            }
        }
        Ok(candle_nn::ops::sigmoid(&depth_to_space(&h, self.factor)?)?)
    }
}

struct ResBlock {
    norm1: GroupNorm,
    conv1: Conv,
    temb: Linear,
    norm2: GroupNorm,
    conv2: Conv,
    skip: Option<Conv>,
}

impl ResBlock {
    fn new(b: &mut Builder, cfg: &UiModelConfig, c_in: usize, c_out: usize) -> Result<Self> {
        Ok(Self {
            norm1: GroupNorm::new(&mut b.sub("norm1"), cfg.groups, c_in)?,
            conv1: Conv::new(&mut b.sub("conv1"), c_in, c_out, 3)?,
            temb: Linear::new(&mut b.sub("temb"), cfg.time_dim, c_out)?,
            norm2: GroupNorm::new(&mut b.sub("norm2"), cfg.groups, c_out)?,
            conv2: Conv::new(&mut b.sub("conv2"), c_out, c_out, 3)?,
            skip: if c_in == c_out {
                None
            } else {
                Some(Conv::new(&mut b.sub("skip"), c_in, c_out, 1)?)
            },
        })
    }

    fn forward(&self, x: &Tensor, temb: &Tensor) -> Result<Tensor> {
        let h = self.conv1.forward(&self.norm1.forward(x)?.silu()?)?;
        let t = self.temb.forward(&temb.silu()?)?.unsqueeze(2)?.unsqueeze(3)?;
        let h = h.broadcast_add(&t)?;
        let h = self.conv2.forward(&self.norm2.forward(&h)?.silu()?)?;
        let skip = match &self.skip {
            Some(c) => c.forward(x)?,
            None => x.clone(),
        };
        Ok((skip + h)?)
    }
}

struct CrossAttention {
    norm: LayerNorm,
    attn: Attention,
}

impl CrossAttention {
    fn new(b: &mut Builder, cfg: &UiModelConfig, c: usize) -> Result<Self> {
        Ok(Self {
            norm: LayerNorm::new(&mut b.sub("norm"), c)?,
            attn: Attention::new(&mut b.sub("attn"), c, cfg.text_dim, cfg.attn_heads)?,
        })
    }

    fn forward(&self, x: &Tensor, text: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        let tokens = x.reshape((n, c, h * w))?.transpose(1, 2)?.contiguous()?;
        let out = self.attn.forward(&self.norm.forward(&tokens)?, text)?;
        let out = out.transpose(1, 2)?.contiguous()?.reshape((n, c, h, w))?;
        Ok((x + out)?)
    }
}

/// Activations the decoder consumes: three skips and the middle output.
pub struct Features {
    pub skips: [Tensor; 3],
    pub mid: Tensor,
}

/// Time embedding, input conv, three resolution levels and the middle
/// block. The denoiser and the control branch each own one.
pub struct EncoderHalf {
    time_dim: usize,
    time1: Linear,
    time2: Linear,
    conv_in: Conv,
    res: [ResBlock; 3],
    down: [Conv; 2],
    mid1: ResBlock,
    mid_attn: CrossAttention,
    mid2: ResBlock,
}

impl EncoderHalf {
    pub fn new(b: &mut Builder, cfg: &UiModelConfig) -> Result<Self> {
        let [c0, c1, c2] = cfg.channels;
        let td = cfg.time_dim;
        Ok(Self {
            time_dim: td,
            time1: Linear::new(&mut b.sub("time1"), td, td)?,
            time2: Linear::new(&mut b.sub("time2"), td, td)?,
            conv_in: Conv::new(&mut b.sub("conv_in"), cfg.latent_channels, c0, 3)?,
            res: [
                ResBlock::new(&mut b.sub("res0"), cfg, c0, c0)?,
                ResBlock::new(&mut b.sub("res1"), cfg, c1, c1)?,
                ResBlock::new(&mut b.sub("res2"), cfg, c2, c2)?,
            ],
            down: [
                Conv::new(&mut b.sub("down0"), 4 * c0, c1, 1)?,
                Conv::new(&mut b.sub("down1"), 4 * c1, c2, 1)?,
            ],
            mid1: ResBlock::new(&mut b.sub("mid1"), cfg, c2, c2)?,
            mid_attn: CrossAttention::new(&mut b.sub("mid_attn"), cfg, c2)?,
            mid2: ResBlock::new(&mut b.sub("mid2"), cfg, c2, c2)?,
        })
    }

    pub fn time_embedding(&self, t: &[usize], like: &Tensor) -> Result<Tensor> {
        let tf: Vec<f64> = t.iter().map(|&v| v as f64).collect();
        let e = timestep_embedding(&tf, self.time_dim, like.dtype(), like.device())?;
        self.time2.forward(&self.time1.forward(&e)?.silu()?)
    }

    /// `hint` is added after the input conv (control branch only).
    pub fn forward(
        &self,
        x: &Tensor,
        t: &[usize],
        text: &Tensor,
        hint: Option<&Tensor>,
    ) -> Result<(Features, Tensor)> {
        let temb = self.time_embedding(t, x)?;
        let mut h = self.conv_in.forward(x)?;
        if let Some(hint) = hint {
            h = (h + hint)?;
        }
        let s0 = self.res[0].forward(&h, &temb)?;
        let h = self.down[0].forward(&space_to_depth(&s0, 2)?)?;
        let s1 = self.res[1].forward(&h, &temb)?;
        let h = self.down[1].forward(&space_to_depth(&s1, 2)?)?;
        let s2 = self.res[2].forward(&h, &temb)?;
        let h = self.mid1.forward(&s2, &temb)?;
        let h = self.mid_attn.forward(&h, text)?;
        let mid = self.mid2.forward(&h, &temb)?;
        Ok((
            Features {
                skips: [s0, s1, s2],
                mid,
            },
            temb,
        ))
    }
}

pub struct DecoderHalf {
    res: [ResBlock; 3],
    up: [Conv; 2],
    norm_out: GroupNorm,
    conv_out: Conv,
}

impl DecoderHalf {
    pub fn new(b: &mut Builder, cfg: &UiModelConfig) -> Result<Self> {
        let [c0, c1, c2] = cfg.channels;
        Ok(Self {
            res: [
                ResBlock::new(&mut b.sub("res0"), cfg, 2 * c0, c0)?,
                ResBlock::new(&mut b.sub("res1"), cfg, 2 * c1, c1)?,
                ResBlock::new(&mut b.sub("res2"), cfg, 2 * c2, c2)?,
            ],
            up: [
                Conv::new(&mut b.sub("up0"), c1, c0, 1)?,
                Conv::new(&mut b.sub("up1"), c2, c1, 1)?,
            ],
            norm_out: GroupNorm::new(&mut b.sub("norm_out"), cfg.groups, c0)?,
            conv_out: Conv::new(&mut b.sub("conv_out"), c0, cfg.latent_channels, 3)?,
        })
    }

    pub fn forward(&self, f: &Features, temb: &Tensor) -> Result<Tensor> {
        let [s0, s1, s2] = &f.skips;
        let h = self.res[2].forward(&Tensor::cat(&[&f.mid, s2], 1)?, temb)?;
        let h = self.up[1].forward(&upsample2(&h)?)?;
        let h = self.res[1].forward(&Tensor::cat(&[&h, s1], 1)?, temb)?;
        let h = self.up[0].forward(&upsample2(&h)?)?;
        let h = self.res[0].forward(&Tensor::cat(&[&h, s0], 1)?, temb)?;
        self.conv_out.forward(&self.norm_out.forward(&h)?.silu()?)
    }
}

/// ε-prediction network: encoder half, decoder half, skip connections.
pub struct Denoiser {
    pub encoder: EncoderHalf,
    pub decoder: DecoderHalf,
}

impl Denoiser {
    pub fn new(b: &mut Builder, cfg: &UiModelConfig) -> Result<Self> {
        Ok(Self {
            encoder: EncoderHalf::new(&mut b.sub("enc"), cfg)?,
            decoder: DecoderHalf::new(&mut b.sub("dec"), cfg)?,
        })
    }

    pub fn forward(&self, x: &Tensor, t: &[usize], text: &Tensor) -> Result<Tensor> {
        self.forward_with(x, t, text, None)
    }

    /// Runs the frozen path, adding `residuals` (if any) to the skips and the
    /// middle output before decoding.
    pub fn forward_with(
        &self,
        x: &Tensor,
        t: &[usize],
        text: &Tensor,
        residuals: Option<&Features>,
    ) -> Result<Tensor> {
        let (mut f, temb) = self.encoder.forward(x, t, text, None)?;
        if let Some(r) = residuals {
            for (s, c) in f.skips.iter_mut().zip(&r.skips) {
                *s = (&*s + c)?;
            }
            f.mid = (&f.mid + &r.mid)?;
        }
        self.decoder.forward(&f, &temb)
    }
}

/// Trainable copy of the encoder half, a wireframe hint encoder, and one
/// zero-initialized 1×1 convolution per injection point.
pub struct ControlBranch {
    factor: usize,
    pub encoder: EncoderHalf,
    hint: [Conv; 3],
    zero: [Conv; 4],
}

impl ControlBranch {
    pub fn new(b: &mut Builder, cfg: &UiModelConfig) -> Result<Self> {
        let [c0, c1, c2] = cfg.channels;
        let hh = cfg.hint_hidden;
        Ok(Self {
            factor: cfg.factor,
            encoder: EncoderHalf::new(&mut b.sub("enc"), cfg)?,
            hint: [
                Conv::new(&mut b.sub("hint0"), 3 * cfg.factor * cfg.factor, hh, 1)?,
                Conv::new(&mut b.sub("hint1"), hh, hh, 3)?,
                Conv::zeros(&mut b.sub("hint_out"), hh, c0, 1)?,
            ],
            zero: [
                Conv::zeros(&mut b.sub("zero0"), c0, c0, 1)?,
                Conv::zeros(&mut b.sub("zero1"), c1, c1, 1)?,
                Conv::zeros(&mut b.sub("zero2"), c2, c2, 1)?,
                Conv::zeros(&mut b.sub("zero_mid"), c2, c2, 1)?,
            ],
        })
    }

    /// Names of the zero-initialized parameters, relative to the branch.
    pub const ZERO_CONVS: [&'static str; 4] = ["zero0", "zero1", "zero2", "zero_mid"];

    /// Residuals for the frozen decoder. `wireframe` is `[B, 3, H, W]` in
    /// `[0, 1]`.
    pub fn forward(&self, x: &Tensor, t: &[usize], text: &Tensor, wireframe: &Tensor) -> Result<Features> {
        let mut h = space_to_depth(wireframe, self.factor)?;
        h = self.hint[0].forward(&h)?.silu()?;
        h = self.hint[1].forward(&h)?.silu()?;
        let hint = self.hint[2].forward(&h)?;
        let (f, _) = self.encoder.forward(x, t, text, Some(&hint))?;
        let [s0, s1, s2] = &f.skips;
        Ok(Features {
            skips: [
                self.zero[0].forward(s0)?,
                self.zero[1].forward(s1)?,
                self.zero[2].forward(s2)?,
            ],
            mid: self.zero[3].forward(&f.mid)?,
        })
    }
}
