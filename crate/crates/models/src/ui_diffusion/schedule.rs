use candle_core::Tensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            timesteps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

/// Linear β schedule. `alphas_cumprod[t]` is ᾱ_t for `t ∈ 0..=T`, with
/// ᾱ_0 = 1 exactly (clean data).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub cfg: ScheduleConfig,
    pub alphas_cumprod: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(cfg: ScheduleConfig) -> Self {
        let t_max = cfg.timesteps;
        let mut ab = Vec::with_capacity(t_max + 1);
        ab.push(1.0);
        let mut acc = 1.0;
        for i in 0..t_max {
            let beta = if t_max == 1 {
                cfg.beta_start
            } else {
                cfg.beta_start + (cfg.beta_end - cfg.beta_start) * i as f64 / (t_max - 1) as f64
            };
            acc *= 1.0 - beta;
            ab.push(acc);
        }
        Self {
            cfg,
            alphas_cumprod: ab,
        }
    }

    pub fn timesteps(&self) -> usize {
        self.cfg.timesteps
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alphas_cumprod[t]
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!(
            "linear:{}:{:e}:{:e}",
            self.cfg.timesteps, self.cfg.beta_start, self.cfg.beta_end
        ));
        hex::encode(h.finalize())
    }

    /// `sqrt(ᾱ_t)·x0 + sqrt(1−ᾱ_t)·ε` with one `t` per batch item.
    pub fn add_noise(&self, x0: &Tensor, t: &[usize], eps: &Tensor) -> Result<Tensor> {
        let n = x0.dim(0)?;
        assert_eq!(n, t.len(), "one timestep per batch item");
        let dims = x0.dims().len();
        let mut shape = vec![n];
        shape.extend(std::iter::repeat_n(1, dims - 1));
        let coef = |f: &dyn Fn(f64) -> f64| -> Result<Tensor> {
            let v: Vec<f64> = t.iter().map(|&ti| f(self.alpha_bar(ti))).collect();
            Ok(Tensor::from_vec(v, shape.clone(), x0.device())?.to_dtype(x0.dtype())?)
        };
        let a = coef(&|ab| ab.sqrt())?;
        let b = coef(&|ab| (1.0 - ab).sqrt())?;
        Ok((x0.broadcast_mul(&a)? + eps.broadcast_mul(&b)?)?)
    }

    /// Deterministic sampler grid: `T·k/S` for `k = S..1`, then 0.
    pub fn ddim_timesteps(&self, steps: usize) -> Vec<usize> {
        let s = steps.clamp(1, self.cfg.timesteps);
        let mut grid: Vec<usize> = (1..=s)
            .rev()
            .map(|k| (self.cfg.timesteps * k) / s)
            .collect();
        grid.push(0);
        grid.dedup();
        grid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    #[test]
    fn alpha_bar_is_strictly_decreasing() {
        let s = NoiseSchedule::new(ScheduleConfig::default());
        assert_eq!(s.alpha_bar(0), 1.0);
        assert!(s.alphas_cumprod.windows(2).all(|w| w[1] < w[0]));
        assert!(s.alpha_bar(1000) < 1e-4);
    }

    #[test]
    fn ddim_grid() {
        let s = NoiseSchedule::new(ScheduleConfig::default());
        let g = s.ddim_timesteps(50);
        assert_eq!(g.len(), 51);
        assert_eq!(g[0], 1000);
        assert_eq!(g[1], 980);
        assert_eq!(*g.last().unwrap(), 0);
    }

    #[test]
    fn endpoints_of_add_noise() {
        let s = NoiseSchedule::new(ScheduleConfig::default());
        let dev = Device::Cpu;
        let x = Tensor::new(&[[1f32, 2.0, -3.0]], &dev).unwrap();
        let e = Tensor::new(&[[0.5f32, -0.5, 0.25]], &dev).unwrap();
        let at0 = s.add_noise(&x, &[0], &e).unwrap().to_vec2::<f32>().unwrap();
        assert_eq!(at0, x.to_vec2::<f32>().unwrap());
        let at_t = s.add_noise(&x, &[1000], &e).unwrap().to_dtype(DType::F64).unwrap();
        let d = (at_t - e.to_dtype(DType::F64).unwrap()).unwrap().abs().unwrap().max_all().unwrap();
        assert!(d.to_scalar::<f64>().unwrap() < 0.05);
    }
}
