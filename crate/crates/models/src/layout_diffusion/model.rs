use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};
use uidiff_core::layout::{AttributeKind, TokenizerConfig, TOKENS_PER_SLOT};

use super::schedule::DiscreteSchedule;
use crate::checkpoint;
use crate::nn::{timestep_embedding, Attention, Builder, Init, LayerNorm, Linear, ParamSource, ParamStore};
use crate::{ModelError, Result};

pub const CHECKPOINT_KIND: &str = "layout-denoiser";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutModelConfig {
    pub tokenizer: TokenizerConfig,
    pub schedule: DiscreteSchedule,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_mult: usize,
}

impl Default for LayoutModelConfig {
    fn default() -> Self {
        Self {
            tokenizer: TokenizerConfig::default(),
            schedule: DiscreteSchedule::default(),
            d_model: 128,
            n_layers: 4,
            n_heads: 4,
            ff_mult: 4,
        }
    }
}

impl LayoutModelConfig {
    /// Small enough to train in a couple of minutes on one CPU core.
    pub fn small() -> Self {
        Self {
            d_model: 64,
            n_layers: 2,
            ..Self::default()
        }
    }

    /// Number of output classes at a position: its vocabulary minus MASK.
    pub fn classes(&self, kind: AttributeKind) -> usize {
        kind.vocab_size(&self.tokenizer) - 1
    }

    fn embed_offset(&self, kind: AttributeKind) -> usize {
        let cat = AttributeKind::Category.vocab_size(&self.tokenizer);
        match kind {
            AttributeKind::Category => 0,
            k => cat + (k.index() - 1) * k.vocab_size(&self.tokenizer),
        }
    }

    fn embed_rows(&self) -> usize {
        self.embed_offset(AttributeKind::H) + AttributeKind::H.vocab_size(&self.tokenizer)
    }
}

struct Block {
    ln1: LayerNorm,
    attn: Attention,
    ln2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

impl Block {
    fn new(b: &mut Builder, cfg: &LayoutModelConfig) -> Result<Self> {
        let d = cfg.d_model;
        Ok(Self {
            ln1: LayerNorm::new(&mut b.sub("ln1"), d)?,
            attn: Attention::new(&mut b.sub("attn"), d, d, cfg.n_heads)?,
            ln2: LayerNorm::new(&mut b.sub("ln2"), d)?,
            ff1: Linear::new(&mut b.sub("ff1"), d, d * cfg.ff_mult)?,
            ff2: Linear::new(&mut b.sub("ff2"), d * cfg.ff_mult, d)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.ln1.forward(x)?;
        let x = (x + self.attn.forward(&h, &h)?)?;
        let h = self.ff2.forward(&self.ff1.forward(&self.ln2.forward(&x)?)?.silu()?)?;
        Ok((x + h)?)
    }
}

/// Bidirectional transformer mapping a corrupted sequence and a timestep to
/// one categorical distribution per position. MASK is never an output class.
pub struct LayoutDenoiser {
    pub cfg: LayoutModelConfig,
    pub store: ParamStore,
    /// Optimizer steps taken so far; zero means untrained.
    pub steps_trained: u64,
    embed: Tensor,
    attr_embed: Tensor,
    slot_embed: Tensor,
    time1: Linear,
    time2: Linear,
    blocks: Vec<Block>,
    ln_out: LayerNorm,
    heads: Vec<Linear>,
    dtype: DType,
    device: Device,
}

impl LayoutDenoiser {
    pub fn new(cfg: LayoutModelConfig, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        Self::build(cfg, ParamSource::random(seed), true, dtype, device, 0)
    }

    fn build(
        cfg: LayoutModelConfig,
        mut source: ParamSource,
        trainable: bool,
        dtype: DType,
        device: &Device,
        steps_trained: u64,
    ) -> Result<Self> {
        let mut store = ParamStore::new();
        let d = cfg.d_model;
        let (embed, attr_embed, slot_embed, time1, time2, blocks, ln_out, heads) = {
            let mut b = source.builder(&mut store, "layout", trainable, dtype, device);
            let embed = b.tensor("embed", &[cfg.embed_rows(), d], Init::Normal(0.02))?;
            let attr_embed = b.tensor("attr_embed", &[TOKENS_PER_SLOT, d], Init::Normal(0.02))?;
            let slot_embed = b.tensor("slot_embed", &[cfg.tokenizer.e_max, d], Init::Normal(0.02))?;
            let time1 = Linear::new(&mut b.sub("time1"), d, d)?;
            let time2 = Linear::new(&mut b.sub("time2"), d, d)?;
            let blocks = (0..cfg.n_layers)
                .map(|i| Block::new(&mut b.sub(&format!("block{i}")), &cfg))
                .collect::<Result<Vec<_>>>()?;
            let ln_out = LayerNorm::new(&mut b.sub("ln_out"), d)?;
            let heads = AttributeKind::ALL
                .iter()
                .map(|&k| Linear::new(&mut b.sub(&format!("head{}", k.index())), d, cfg.classes(k)))
                .collect::<Result<Vec<_>>>()?;
            (embed, attr_embed, slot_embed, time1, time2, blocks, ln_out, heads)
        };
        let leftover = source.leftover();
        if !leftover.is_empty() {
            return Err(ModelError::Checkpoint(format!("unexpected tensors {leftover:?}")));
        }
        Ok(Self {
            cfg,
            store,
            steps_trained,
            embed,
            attr_embed,
            slot_embed,
            time1,
            time2,
            blocks,
            ln_out,
            heads,
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

    /// Logits for each attribute, `[B, e_max, classes(kind)]`, in
    /// [`AttributeKind::ALL`] order.
    pub fn forward(&self, tokens: &[&[u32]], t: &[usize]) -> Result<Vec<Tensor>> {
        let cfg = &self.cfg;
        let seq_len = cfg.tokenizer.seq_len();
        let bsz = tokens.len();
        if t.len() != bsz {
            return Err(ModelError::ShapeMismatch(format!(
                "{bsz} sequences but {} timesteps",
                t.len()
            )));
        }
        let mut ids = Vec::with_capacity(bsz * seq_len);
        for seq in tokens {
            if seq.len() != seq_len {
                return Err(ModelError::ShapeMismatch(format!(
                    "sequence of length {} for a {seq_len}-token model",
                    seq.len()
                )));
            }
            for (i, &tok) in seq.iter().enumerate() {
                let kind = cfg.tokenizer.kind_at(i);
                if tok as usize >= kind.vocab_size(&cfg.tokenizer) {
                    return Err(ModelError::ShapeMismatch(format!(
                        "token {tok} out of range at position {i}"
                    )));
                }
                ids.push((cfg.embed_offset(kind) + tok as usize) as u32);
            }
        }
        let d = cfg.d_model;
        let ids = Tensor::from_vec(ids, bsz * seq_len, &self.device)?;
        let x = self.embed.index_select(&ids, 0)?.reshape((bsz, seq_len, d))?;

        let pos_attr: Vec<u32> = (0..seq_len).map(|p| (p % TOKENS_PER_SLOT) as u32).collect();
        let pos_slot: Vec<u32> = (0..seq_len).map(|p| (p / TOKENS_PER_SLOT) as u32).collect();
        let pos = (self
            .attr_embed
            .index_select(&Tensor::from_vec(pos_attr, seq_len, &self.device)?, 0)?
            + self
                .slot_embed
                .index_select(&Tensor::from_vec(pos_slot, seq_len, &self.device)?, 0)?)?;

        let tf: Vec<f64> = t.iter().map(|&v| v as f64).collect();
        let temb = timestep_embedding(&tf, d, self.dtype, &self.device)?;
        let temb = self.time2.forward(&self.time1.forward(&temb)?.silu()?)?;

        let mut x = x
            .broadcast_add(&pos.unsqueeze(0)?)?
            .broadcast_add(&temb.unsqueeze(1)?)?;
        for block in &self.blocks {
            x = block.forward(&x)?;
        }
        let x = self
            .ln_out
            .forward(&x)?
            .reshape((bsz, cfg.tokenizer.e_max, TOKENS_PER_SLOT, d))?;
        AttributeKind::ALL
            .iter()
            .map(|k| {
                let h = x.narrow(2, k.index(), 1)?.squeeze(2)?;
                self.heads[k.index()].forward(&h)
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(
            path,
            CHECKPOINT_KIND,
            &Meta {
                config: self.cfg,
                steps_trained: self.steps_trained,
            },
            self.store.tensors(),
        )
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        checkpoint::to_bytes(
            CHECKPOINT_KIND,
            &Meta {
                config: self.cfg,
                steps_trained: self.steps_trained,
            },
            self.store.tensors(),
        )
    }

    /// Loads weights; `trainable` decides whether they can be optimized
    /// further.
    pub fn load(path: &Path, trainable: bool, device: &Device) -> Result<Self> {
        let ck = checkpoint::load::<Meta>(path, CHECKPOINT_KIND, device)?;
        Self::from_checkpoint(ck, trainable, device)
    }

    pub fn from_bytes(bytes: &[u8], trainable: bool, device: &Device) -> Result<Self> {
        let ck = checkpoint::from_bytes::<Meta>(bytes, CHECKPOINT_KIND, device)?;
        Self::from_checkpoint(ck, trainable, device)
    }

    fn from_checkpoint(
        ck: checkpoint::Checkpoint<Meta>,
        trainable: bool,
        device: &Device,
    ) -> Result<Self> {
        let dtype = ck
            .tensors
            .values()
            .next()
            .map(|t| t.dtype())
            .unwrap_or(DType::F32);
        Self::build(
            ck.meta.config,
            ParamSource::load(ck.tensors),
            trainable,
            dtype,
            device,
            ck.meta.steps_trained,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: LayoutModelConfig,
    steps_trained: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_shapes_and_checkpoint_round_trip() {
        let cfg = LayoutModelConfig {
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            ..LayoutModelConfig::default()
        };
        let dev = Device::Cpu;
        let m = LayoutDenoiser::new(cfg, 1, DType::F32, &dev).unwrap();
        let seq = uidiff_core::TokenSequence::all_mask(&cfg.tokenizer);
        let out = m.forward(&[&seq.tokens, &seq.tokens], &[100, 3]).unwrap();
        assert_eq!(out[0].dims(), &[2, 20, 26]);
        assert_eq!(out[1].dims(), &[2, 20, 33]);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.safetensors");
        m.save(&p).unwrap();
        let back = LayoutDenoiser::load(&p, false, &dev).unwrap();
        assert_eq!(back.store.hash("").unwrap(), m.store.hash("").unwrap());
        let out2 = back.forward(&[&seq.tokens], &[100]).unwrap();
        let a = out[2].narrow(0, 0, 1).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        let b = out2[2].flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_tokens() {
        let cfg = LayoutModelConfig {
            d_model: 8,
            n_layers: 1,
            n_heads: 1,
            ..LayoutModelConfig::default()
        };
        let m = LayoutDenoiser::new(cfg, 1, DType::F32, &Device::Cpu).unwrap();
        assert!(m.forward(&[&[0u32; 3]], &[1]).is_err());
        let mut seq = uidiff_core::TokenSequence::all_mask(&cfg.tokenizer).tokens;
        seq[0] = 99;
        assert!(m.forward(&[&seq], &[1]).is_err());
    }
}
