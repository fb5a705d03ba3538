use rand::Rng;
use serde::{Deserialize, Serialize};
use uidiff_core::layout::TokenizerConfig;
use uidiff_core::TokenSequence;

/// Linear absorbing schedule: by step `t` each token is MASK with
/// probability `t / T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteSchedule {
    pub timesteps: usize,
}

impl Default for DiscreteSchedule {
    fn default() -> Self {
        Self { timesteps: 100 }
    }
}

impl DiscreteSchedule {
    pub fn new(timesteps: usize) -> Self {
        assert!(timesteps > 0);
        Self { timesteps }
    }

    pub fn mask_prob(&self, t: usize) -> f64 {
        t.min(self.timesteps) as f64 / self.timesteps as f64
    }

    /// Probability that a token still masked at `t` is revealed when
    /// stepping back to `s < t`.
    pub fn unmask_prob(&self, t: usize, s: usize) -> f64 {
        let mt = self.mask_prob(t);
        if mt == 0.0 {
            1.0
        } else {
            (mt - self.mask_prob(s)) / mt
        }
    }
}

fn corrupt_impl<R: Rng + ?Sized>(
    seq: &TokenSequence,
    t: usize,
    schedule: &DiscreteSchedule,
    cfg: &TokenizerConfig,
    rng: &mut R,
    include_pad: bool,
) -> TokenSequence {
    let p = schedule.mask_prob(t);
    let mut out = seq.clone();
    for (i, tok) in out.tokens.iter_mut().enumerate() {
        let kind = cfg.kind_at(i);
        debug_assert_ne!(*tok, kind.mask(cfg), "clean sequence contains MASK");
        if !include_pad && *tok == kind.pad(cfg) {
            continue;
        }
        if rng.random::<f64>() < p {
            *tok = kind.mask(cfg);
        }
    }
    out
}

/// Forward process: every non-PAD token independently becomes MASK with
/// probability `mask_prob(t)`.
pub fn corrupt<R: Rng + ?Sized>(
    seq: &TokenSequence,
    t: usize,
    schedule: &DiscreteSchedule,
    cfg: &TokenizerConfig,
    rng: &mut R,
) -> TokenSequence {
    corrupt_impl(seq, t, schedule, cfg, rng, false)
}

/// Like [`corrupt`] but PAD tokens are masked too. Training uses this so the
/// denoiser learns where slots are empty, which the sampler needs since it
/// starts from an all-MASK sequence.
pub fn corrupt_with_pad<R: Rng + ?Sized>(
    seq: &TokenSequence,
    t: usize,
    schedule: &DiscreteSchedule,
    cfg: &TokenizerConfig,
    rng: &mut R,
) -> TokenSequence {
    corrupt_impl(seq, t, schedule, cfg, rng, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use uidiff_core::{BBox, ComponentCategory, Layout};

    fn seq(cfg: &TokenizerConfig, n: usize) -> TokenSequence {
        let layout = Layout::with_elements(
            288,
            512,
            (0..n).map(|i| (ComponentCategory::TEXT, BBox::new(0.0, i as f64 * 0.04, 0.5, 0.03))),
        );
        cfg.tokenize(&layout).unwrap()
    }

    #[test]
    fn schedule_endpoints() {
        let s = DiscreteSchedule::default();
        assert_eq!(s.mask_prob(0), 0.0);
        assert_eq!(s.mask_prob(100), 1.0);
        assert!((1..=100).all(|t| s.mask_prob(t) >= s.mask_prob(t - 1)));
        assert_eq!(s.unmask_prob(1, 0), 1.0);
    }

    #[test]
    fn t0_identity_and_tmax_masks_everything_but_pad() {
        let cfg = TokenizerConfig::default();
        let s = DiscreteSchedule::default();
        let x = seq(&cfg, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(corrupt(&x, 0, &s, &cfg, &mut rng), x);
        let y = corrupt(&x, 100, &s, &cfg, &mut rng);
        for i in 0..x.len() {
            if x.is_pad(&cfg, i) {
                assert_eq!(y.tokens[i], x.tokens[i]);
            } else {
                assert!(y.is_mask(&cfg, i));
            }
        }
        let z = corrupt_with_pad(&x, 100, &s, &cfg, &mut rng);
        assert_eq!(z.count_masks(&cfg), cfg.seq_len());
    }

    #[test]
    fn half_way_fraction() {
        let cfg = TokenizerConfig::default();
        let s = DiscreteSchedule::default();
        let x = seq(&cfg, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let masked: usize = (0..n)
            .map(|_| corrupt(&x, 50, &s, &cfg, &mut rng).count_masks(&cfg))
            .sum();
        let frac = masked as f64 / (n * 100) as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }
}
