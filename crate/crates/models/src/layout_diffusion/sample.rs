use candle_core::DType;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uidiff_core::layout::{AttributeKind, TOKENS_PER_SLOT};
use uidiff_core::{ComponentCondition, Layout, TokenSequence};

use super::model::LayoutDenoiser;
use crate::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    /// Reverse steps; `None` walks every timestep from T down to 0.
    pub steps: Option<usize>,
    pub temperature: f64,
    pub allow_untrained: bool,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            steps: None,
            temperature: 1.0,
            allow_untrained: false,
        }
    }
}

/// Timesteps visited, descending from T and ending at 0.
fn time_grid(t_max: usize, steps: Option<usize>) -> Vec<usize> {
    let s = steps.unwrap_or(t_max).clamp(1, t_max);
    let mut grid: Vec<usize> = (0..=s)
        .rev()
        .map(|k| ((t_max * k) as f64 / s as f64).round() as usize)
        .collect();
    grid.dedup();
    grid
}

struct Chain {
    rng: ChaCha8Rng,
    tokens: Vec<u32>,
    clamped: Vec<bool>,
}

/// Draws one layout. With a condition, the first `k` slots carry its
/// categories (sorted by id) and are never resampled.
pub fn sample(
    model: &LayoutDenoiser,
    condition: Option<&ComponentCondition>,
    seed: u64,
    cfg: &SampleConfig,
) -> Result<Layout> {
    Ok(sample_many(model, &[(condition.cloned(), seed)], cfg)?.remove(0))
}

/// Batched [`sample`]; each chain has its own RNG seeded from its seed, so
/// results do not depend on what else is in the batch.
pub fn sample_many(
    model: &LayoutDenoiser,
    requests: &[(Option<ComponentCondition>, u64)],
    cfg: &SampleConfig,
) -> Result<Vec<Layout>> {
    if model.steps_trained == 0 && !cfg.allow_untrained {
        return Err(ModelError::Untrained);
    }
    let tok = model.cfg.tokenizer;
    let schedule = model.cfg.schedule;
    let e_max = tok.e_max;
    let mut chains = Vec::with_capacity(requests.len());
    for (cond, seed) in requests {
        let mut seq = TokenSequence::all_mask(&tok);
        let mut clamped = vec![false; e_max];
        if let Some(cond) = cond {
            if cond.total() > e_max {
                return Err(ModelError::ConditionTooLarge {
                    requested: cond.total(),
                    e_max,
                });
            }
            for (slot, cat) in cond.expanded().into_iter().enumerate() {
                seq.tokens[slot * TOKENS_PER_SLOT] = cat.id() as u32;
                clamped[slot] = true;
            }
        }
        chains.push(Chain {
            rng: ChaCha8Rng::seed_from_u64(*seed),
            tokens: seq.tokens,
            clamped,
        });
    }

    let temp = cfg.temperature.max(1e-6);
    let grid = time_grid(schedule.timesteps, cfg.steps);
    for pair in grid.windows(2) {
        let (t, s) = (pair[0], pair[1]);
        let p_reveal = schedule.unmask_prob(t, s);
        let reveals: Vec<Vec<(usize, AttributeKind)>> = chains
            .iter_mut()
            .map(|chain| {
                let mut picks = Vec::new();
                for slot in 0..e_max {
                    for kind in AttributeKind::ALL {
                        let pos = slot * TOKENS_PER_SLOT + kind.index();
                        if chain.tokens[pos] == kind.mask(&tok) && chain.rng.random::<f64>() < p_reveal {
                            picks.push((slot, kind));
                        }
                    }
                }
                picks
            })
            .collect();
        let active: Vec<usize> = (0..chains.len()).filter(|&b| !reveals[b].is_empty()).collect();
        if active.is_empty() {
            continue;
        }
        let inputs: Vec<&[u32]> = active.iter().map(|&b| chains[b].tokens.as_slice()).collect();
        let tv = vec![t; active.len()];
        let logits: Vec<Vec<f32>> = model
            .forward(&inputs, &tv)?
            .into_iter()
            .map(|l| l.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>())
            .collect::<candle_core::Result<_>>()?;
        for (row_idx, &b) in active.iter().enumerate() {
            let chain = &mut chains[b];
            for &(slot, kind) in &reveals[b] {
                let mut any_pad = false;
                let mut any_real = chain.clamped[slot];
                for k in AttributeKind::ALL {
                    let v = chain.tokens[slot * TOKENS_PER_SLOT + k.index()];
                    if v == k.pad(&tok) {
                        any_pad = true;
                    } else if v != k.mask(&tok) {
                        any_real = true;
                    }
                }
                let classes = model.cfg.classes(kind);
                let base = (row_idx * e_max + slot) * classes;
                let row = &logits[kind.index()][base..base + classes];
                let pad = kind.pad(&tok) as usize;
                let allowed = |c: usize| {
                    if any_pad {
                        c == pad
                    } else if any_real {
                        c != pad
                    } else {
                        true
                    }
                };
                chain.tokens[slot * TOKENS_PER_SLOT + kind.index()] = draw(row, temp, allowed, &mut chain.rng) as u32;
            }
        }
    }

    chains
        .into_iter()
        .map(|c| {
            let seq = TokenSequence::from_tokens(&tok, c.tokens)?;
            Ok(tok
                .detokenize(&seq, uidiff_core::CANVAS_W, uidiff_core::CANVAS_H)?
                .layout)
        })
        .collect()
}

/// Categorical draw from `softmax(logits / temp)` restricted to `allowed`.
fn draw(logits: &[f32], temp: f64, allowed: impl Fn(usize) -> bool, rng: &mut ChaCha8Rng) -> usize {
    let max = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| allowed(*i))
        .map(|(_, &v)| v as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if allowed(i) {
                ((v as f64 - max) / temp).exp()
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        last = i;
        if u < *w {
            return i;
        }
        u -= w;
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout_diffusion::LayoutModelConfig;
    use candle_core::Device;
    use uidiff_core::ComponentCategory;

    fn untrained() -> LayoutDenoiser {
        let cfg = LayoutModelConfig {
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            ..LayoutModelConfig::default()
        };
        LayoutDenoiser::new(cfg, 4, DType::F32, &Device::Cpu).unwrap()
    }

    fn loose() -> SampleConfig {
        SampleConfig {
            steps: Some(10),
            allow_untrained: true,
            ..SampleConfig::default()
        }
    }

    #[test]
    fn grid_ends_at_zero() {
        assert_eq!(time_grid(100, Some(4)), vec![100, 75, 50, 25, 0]);
        assert_eq!(time_grid(3, None), vec![3, 2, 1, 0]);
        assert_eq!(time_grid(3, Some(50)), vec![3, 2, 1, 0]);
    }

    #[test]
    fn refuses_untrained_by_default() {
        assert!(matches!(
            sample(&untrained(), None, 0, &SampleConfig::default()),
            Err(ModelError::Untrained)
        ));
    }

    #[test]
    fn unconditional_untrained_is_valid() {
        let m = untrained();
        for seed in 0..5 {
            let l = sample(&m, None, seed, &loose()).unwrap();
            assert!(l.is_valid());
        }
    }

    #[test]
    fn condition_is_always_present_and_deterministic() {
        let m = untrained();
        let cond: ComponentCondition = "toolbar:1, text button:2".parse().unwrap();
        for seed in 0..10 {
            let l = sample(&m, Some(&cond), seed, &loose()).unwrap();
            let got = l.condition();
            assert!(got.count(ComponentCategory::TOOLBAR) >= 1);
            assert!(got.count(ComponentCategory::TEXT_BUTTON) >= 2);
            assert_eq!(l, sample(&m, Some(&cond), seed, &loose()).unwrap());
        }
    }

    #[test]
    fn batching_does_not_change_results() {
        let m = untrained();
        let cond: ComponentCondition = "icon:3".parse().unwrap();
        let reqs = vec![(Some(cond.clone()), 1), (None, 2), (Some(cond.clone()), 3)];
        let many = sample_many(&m, &reqs, &loose()).unwrap();
        for ((c, s), l) in reqs.iter().zip(&many) {
            assert_eq!(*l, sample(&m, c.as_ref(), *s, &loose()).unwrap());
        }
    }

    #[test]
    fn oversized_condition() {
        let cond = ComponentCondition::new().with(ComponentCategory::TEXT, 21);
        assert!(matches!(
            sample(&untrained(), Some(&cond), 0, &loose()),
            Err(ModelError::ConditionTooLarge { .. })
        ));
    }
}
