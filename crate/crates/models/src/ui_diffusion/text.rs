use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::nn::{Attention, Builder, Init, LayerNorm, Linear};
use crate::Result;

pub const PAD_TOKEN: u32 = 0;

/// Hashed bag-of-words tokenizer: lowercase alphanumeric words bucketed by
/// FNV-1a into `vocab - 1` ids, id 0 is padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextTokenizer {
    pub vocab: usize,
    pub max_len: usize,
}

impl TextTokenizer {
    pub fn words(prompt: &str) -> impl Iterator<Item = String> + '_ {
        prompt
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
    }

    pub fn encode(&self, prompt: &str) -> Vec<u32> {
        let mut ids: Vec<u32> = Self::words(prompt)
            .map(|w| {
                let h = w.bytes().fold(0xcbf29ce484222325u64, |h, b| {
                    (h ^ b as u64).wrapping_mul(0x100000001b3)
                });
                1 + (h % (self.vocab as u64 - 1)) as u32
            })
            .collect();
        if ids.len() > self.max_len {
            tracing::warn!(
                words = ids.len(),
                max = self.max_len,
                "prompt truncated to the text encoder length"
            );
            ids.truncate(self.max_len);
        }
        ids.resize(self.max_len, PAD_TOKEN);
        ids
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("fnv1a-words:{}:{}", self.vocab, self.max_len));
        hex::encode(h.finalize())
    }
}

/// Token embeddings plus one transformer layer, `[B, L, D]` out.
pub struct TextEncoder {
    pub tokenizer: TextTokenizer,
    tok_embed: Tensor,
    pos_embed: Tensor,
    ln1: LayerNorm,
    attn: Attention,
    ln2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
    ln_out: LayerNorm,
    device: Device,
}

impl TextEncoder {
    pub fn new(b: &mut Builder, tokenizer: TextTokenizer, dim: usize, heads: usize) -> Result<Self> {
        Ok(Self {
            tokenizer,
            tok_embed: b.tensor("tok_embed", &[tokenizer.vocab, dim], Init::Normal(0.5))?,
            pos_embed: b.tensor("pos_embed", &[tokenizer.max_len, dim], Init::Normal(0.1))?,
            ln1: LayerNorm::new(&mut b.sub("ln1"), dim)?,
            attn: Attention::new(&mut b.sub("attn"), dim, dim, heads)?,
            ln2: LayerNorm::new(&mut b.sub("ln2"), dim)?,
            ff1: Linear::new(&mut b.sub("ff1"), dim, dim * 2)?,
            ff2: Linear::new(&mut b.sub("ff2"), dim * 2, dim)?,
            ln_out: LayerNorm::new(&mut b.sub("ln_out"), dim)?,
            device: b.device.clone(),
        })
    }

    pub fn encode(&self, prompts: &[&str]) -> Result<Tensor> {
        let ids: Vec<u32> = prompts
            .iter()
            .flat_map(|p| self.tokenizer.encode(p))
            .collect();
        self.forward_ids(&ids, prompts.len())
    }

    pub fn forward_ids(&self, ids: &[u32], batch: usize) -> Result<Tensor> {
        let l = self.tokenizer.max_len;
        let d = self.tok_embed.dim(1)?;
        let ids = Tensor::from_vec(ids.to_vec(), batch * l, &self.device)?;
        let x = self
            .tok_embed
            .index_select(&ids, 0)?
            .reshape((batch, l, d))?
            .broadcast_add(&self.pos_embed.unsqueeze(0)?)?;
        let h = self.ln1.forward(&x)?;
        let x = (&x + self.attn.forward(&h, &h)?)?;
        let h = self.ff2.forward(&self.ff1.forward(&self.ln2.forward(&x)?)?.silu()?)?;
        self.ln_out.forward(&(x + h)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_pads_and_truncates() {
        let t = TextTokenizer { vocab: 64, max_len: 4 };
        assert_eq!(t.encode(""), vec![0; 4]);
        let a = t.encode("A nice screenshot");
        assert_eq!(a[3], 0);
        assert!(a[..3].iter().all(|&i| i > 0 && i < 64));
        assert_eq!(t.encode("a NICE, screenshot!"), a);
        assert_eq!(t.encode("one two three four five six").len(), 4);
    }
}
