use serde::{Deserialize, Serialize};

use super::{BBox, ComponentCategory, Layout, LayoutError, DEFAULT_E_MAX};

/// Number of tokens per element slot: `[cat, x, y, w, h]`.
pub const TOKENS_PER_SLOT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenizerConfig {
    /// Quantization bins per geometric attribute.
    pub bins: usize,
    /// Maximum number of element slots.
    pub e_max: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            bins: 32,
            e_max: DEFAULT_E_MAX,
        }
    }
}

/// Which vocabulary a sequence position draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttributeKind {
    Category,
    X,
    Y,
    W,
    H,
}

impl AttributeKind {
    pub const ALL: [AttributeKind; TOKENS_PER_SLOT] = [
        AttributeKind::Category,
        AttributeKind::X,
        AttributeKind::Y,
        AttributeKind::W,
        AttributeKind::H,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Number of real (non-special) values.
    pub fn value_count(self, cfg: &TokenizerConfig) -> usize {
        match self {
            AttributeKind::Category => ComponentCategory::COUNT,
            _ => cfg.bins,
        }
    }

    /// Full vocabulary size including PAD and MASK.
    pub fn vocab_size(self, cfg: &TokenizerConfig) -> usize {
        self.value_count(cfg) + 2
    }

    pub fn pad(self, cfg: &TokenizerConfig) -> u32 {
        self.value_count(cfg) as u32
    }

    pub fn mask(self, cfg: &TokenizerConfig) -> u32 {
        self.value_count(cfg) as u32 + 1
    }
}

impl TokenizerConfig {
    pub fn seq_len(&self) -> usize {
        self.e_max * TOKENS_PER_SLOT
    }

    pub fn kind_at(&self, position: usize) -> AttributeKind {
        AttributeKind::ALL[position % TOKENS_PER_SLOT]
    }

    pub fn quantize(&self, v: f64) -> u32 {
        let b = (v * self.bins as f64).floor();
        b.clamp(0.0, (self.bins - 1) as f64) as u32
    }

    pub fn dequantize(&self, bin: u32) -> f64 {
        (bin as f64 + 0.5) / self.bins as f64
    }

    /// Tokenizes `layout`: slot `i` encodes element `i`, unused slots are PAD.
    pub fn tokenize(&self, layout: &Layout) -> Result<TokenSequence, LayoutError> {
        layout.ensure_valid(self.e_max)?;
        let mut seq = TokenSequence::all_pad(self);
        for (slot, el) in layout.elements.iter().enumerate() {
            let b = el.bbox;
            let base = slot * TOKENS_PER_SLOT;
            seq.tokens[base] = el.category.id() as u32;
            seq.tokens[base + 1] = self.quantize(b.x);
            seq.tokens[base + 2] = self.quantize(b.y);
            seq.tokens[base + 3] = self.quantize(b.w);
            seq.tokens[base + 4] = self.quantize(b.h);
        }
        Ok(seq)
    }

    /// Inverse of [`tokenize`](Self::tokenize) up to quantization. Boxes are
    /// clipped to the canvas; boxes narrower or shorter than one pixel are
    /// dropped and counted.
    pub fn detokenize(
        &self,
        seq: &TokenSequence,
        canvas_w: u32,
        canvas_h: u32,
    ) -> Result<DetokenizeOutput, LayoutError> {
        seq.check(self)?;
        if let Some(p) = seq.tokens.iter().enumerate().find_map(|(i, &t)| {
            (t == self.kind_at(i).mask(self)).then_some(i)
        }) {
            return Err(LayoutError::MaskedSequence(p));
        }
        let mut layout = Layout::empty(canvas_w, canvas_h);
        let mut dropped = 0;
        for slot in 0..self.e_max {
            let toks = seq.slot(slot);
            let pads = toks
                .iter()
                .zip(AttributeKind::ALL)
                .filter(|(t, k)| **t == k.pad(self))
                .count();
            match pads {
                TOKENS_PER_SLOT => continue,
                0 => {}
                _ => return Err(LayoutError::MixedPadSlot(slot)),
            }
            let category = ComponentCategory::from_id(toks[0] as usize)
                .expect("category token checked against vocabulary");
            let x = self.dequantize(toks[1]);
            let y = self.dequantize(toks[2]);
            let w = self.dequantize(toks[3]).min(1.0 - x);
            let h = self.dequantize(toks[4]).min(1.0 - y);
            if w * (canvas_w as f64) < 1.0 || h * (canvas_h as f64) < 1.0 {
                dropped += 1;
                continue;
            }
            layout.push(category, BBox::new(x, y, w, h));
        }
        Ok(DetokenizeOutput { layout, dropped })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetokenizeOutput {
    pub layout: Layout,
    /// Degenerate elements removed during dequantization.
    pub dropped: usize,
}

/// Fixed-length categorical encoding of a layout.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<u32>,
    pub kinds: Vec<AttributeKind>,
}

impl TokenSequence {
    pub fn all_pad(cfg: &TokenizerConfig) -> Self {
        Self::filled(cfg, |k| k.pad(cfg))
    }

    pub fn all_mask(cfg: &TokenizerConfig) -> Self {
        Self::filled(cfg, |k| k.mask(cfg))
    }

    fn filled(cfg: &TokenizerConfig, f: impl Fn(AttributeKind) -> u32) -> Self {
        let kinds: Vec<AttributeKind> = (0..cfg.seq_len()).map(|i| cfg.kind_at(i)).collect();
        let tokens = kinds.iter().map(|k| f(*k)).collect();
        Self { tokens, kinds }
    }

    /// Builds a sequence from raw tokens, checking every token against its
    /// position's vocabulary.
    pub fn from_tokens(cfg: &TokenizerConfig, tokens: Vec<u32>) -> Result<Self, LayoutError> {
        let kinds = (0..tokens.len()).map(|i| cfg.kind_at(i)).collect();
        let seq = Self { tokens, kinds };
        seq.check(cfg)?;
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn slot(&self, slot: usize) -> &[u32] {
        &self.tokens[slot * TOKENS_PER_SLOT..(slot + 1) * TOKENS_PER_SLOT]
    }

    pub fn is_mask(&self, cfg: &TokenizerConfig, position: usize) -> bool {
        self.tokens[position] == self.kinds[position].mask(cfg)
    }

    pub fn is_pad(&self, cfg: &TokenizerConfig, position: usize) -> bool {
        self.tokens[position] == self.kinds[position].pad(cfg)
    }

    pub fn count_masks(&self, cfg: &TokenizerConfig) -> usize {
        (0..self.len()).filter(|&p| self.is_mask(cfg, p)).count()
    }

    fn check(&self, cfg: &TokenizerConfig) -> Result<(), LayoutError> {
        if self.tokens.len() != cfg.seq_len() || self.kinds.len() != cfg.seq_len() {
            return Err(LayoutError::LengthMismatch {
                got: self.tokens.len(),
                expected: cfg.seq_len(),
            });
        }
        for (position, (&token, kind)) in self.tokens.iter().zip(&self.kinds).enumerate() {
            if *kind != cfg.kind_at(position) || token as usize >= kind.vocab_size(cfg) {
                return Err(LayoutError::InvalidToken { position, token });
            }
        }
        Ok(())
    }
}
