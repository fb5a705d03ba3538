//! Seeded parameter store and the handful of layers both models are built
//! from. Convolutions are im2col + matmul so that forward and backward stay
//! on the fast matmul path on CPU.

use std::collections::{BTreeMap, HashMap};

use candle_core::{DType, Device, Tensor, Var, D};
use candle_nn::Module;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use sha2::{Digest, Sha256};

use crate::{ModelError, Result};

/// Named parameters. Trainable entries are backed by a [`Var`]; frozen ones
/// are plain tensors and never receive gradients.
#[derive(Default)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
    vars: BTreeMap<String, Var>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn var(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    /// Trainable variables whose name starts with `prefix`.
    pub fn vars_with_prefix(&self, prefix: &str) -> Vec<Var> {
        self.vars
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| v.clone())
            .collect()
    }

    pub fn all_vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn num_params(&self, prefix: &str) -> usize {
        self.tensors
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, t)| t.elem_count())
            .sum()
    }

    /// Copies of the tensors under `prefix`, keyed by full name. Copies, not
    /// views: optimizers update variables in place.
    pub fn snapshot(&self, prefix: &str) -> Result<HashMap<String, Tensor>> {
        self.tensors
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(k, t)| Ok((k.clone(), t.detach().copy()?)))
            .collect()
    }

    /// Sha256 over names, shapes and values of every tensor under `prefix`.
    pub fn hash(&self, prefix: &str) -> Result<String> {
        let mut h = Sha256::new();
        for (name, t) in self.tensors.iter().filter(|(k, _)| k.starts_with(prefix)) {
            h.update(name.as_bytes());
            h.update([0]);
            for d in t.dims() {
                h.update((*d as u64).to_le_bytes());
            }
            h.update(format!("{:?}", t.dtype()).as_bytes());
            match t.dtype() {
                DType::F64 => {
                    for v in t.flatten_all()?.to_vec1::<f64>()? {
                        h.update(v.to_le_bytes());
                    }
                }
                _ => {
                    for v in t.flatten_all()?.to_dtype(DType::F32)?.to_vec1::<f32>()? {
                        h.update(v.to_le_bytes());
                    }
                }
            }
        }
        Ok(hex::encode(h.finalize()))
    }

    /// Overwrites one scalar of a parameter in place. Used for finite
    /// differences and perturbation tests.
    pub fn set_scalar(&self, name: &str, index: usize, value: f64) -> Result<()> {
        let t = self
            .tensors
            .get(name)
            .ok_or_else(|| ModelError::Checkpoint(format!("no parameter {name}")))?;
        let mut v = t.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
        v[index] = value;
        let new = Tensor::from_vec(v, t.shape(), t.device())?.to_dtype(t.dtype())?;
        match self.vars.get(name) {
            Some(var) => var.set(&new)?,
            None => {
                return Err(ModelError::Checkpoint(format!(
                    "parameter {name} is frozen and cannot be edited in place"
                )))
            }
        }
        Ok(())
    }

    pub fn get_scalar(&self, name: &str, index: usize) -> Result<f64> {
        let t = self
            .tensors
            .get(name)
            .ok_or_else(|| ModelError::Checkpoint(format!("no parameter {name}")))?;
        Ok(t.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?[index])
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    Normal(f64),
    /// Normal with std `gain / sqrt(fan_in)`.
    FanIn(f64),
}

enum Source {
    Random(ChaCha8Rng),
    Load(HashMap<String, Tensor>),
    /// Loaded where available, random elsewhere.
    Mixed(HashMap<String, Tensor>, ChaCha8Rng),
}

/// Creates parameters either from a seeded RNG or from loaded tensors, and
/// registers them in a [`ParamStore`] under a dotted prefix.
pub struct Builder<'a> {
    store: &'a mut ParamStore,
    source: &'a mut Source,
    prefix: String,
    trainable: bool,
    pub dtype: DType,
    pub device: Device,
}

/// Owns the parameter source so builders can borrow it.
pub struct ParamSource(Source);

impl ParamSource {
    pub fn random(seed: u64) -> Self {
        Self(Source::Random(ChaCha8Rng::seed_from_u64(seed)))
    }

    pub fn load(tensors: HashMap<String, Tensor>) -> Self {
        Self(Source::Load(tensors))
    }

    pub fn load_or_random(tensors: HashMap<String, Tensor>, seed: u64) -> Self {
        Self(Source::Mixed(tensors, ChaCha8Rng::seed_from_u64(seed)))
    }

    /// Names that were loaded but never requested.
    pub fn leftover(&self) -> Vec<String> {
        match &self.0 {
            Source::Random(_) => Vec::new(),
            Source::Load(m) | Source::Mixed(m, _) => {
                let mut v: Vec<_> = m.keys().cloned().collect();
                v.sort();
                v
            }
        }
    }

    pub fn builder<'a>(
        &'a mut self,
        store: &'a mut ParamStore,
        prefix: &str,
        trainable: bool,
        dtype: DType,
        device: &Device,
    ) -> Builder<'a> {
        Builder {
            store,
            source: &mut self.0,
            prefix: prefix.to_string(),
            trainable,
            dtype,
            device: device.clone(),
        }
    }
}

impl Builder<'_> {
    pub fn sub(&mut self, name: &str) -> Builder<'_> {
        Builder {
            store: self.store,
            source: self.source,
            prefix: join(&self.prefix, name),
            trainable: self.trainable,
            dtype: self.dtype,
            device: self.device.clone(),
        }
    }

    pub fn tensor(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        let full = join(&self.prefix, name);
        let loaded = match self.source {
            Source::Load(map) => Some(
                map.remove(&full)
                    .ok_or_else(|| ModelError::Checkpoint(format!("missing tensor {full}")))?,
            ),
            Source::Mixed(map, _) => map.remove(&full),
            Source::Random(_) => None,
        };
        let t = match (loaded, &mut *self.source) {
            (Some(t), _) => {
                if t.dims() != shape {
                    return Err(ModelError::ShapeMismatch(format!(
                        "{full}: stored {:?}, model expects {shape:?}",
                        t.dims()
                    )));
                }
                t.to_dtype(self.dtype)?.to_device(&self.device)?
            }
            (None, Source::Random(rng) | Source::Mixed(_, rng)) => {
                let n: usize = shape.iter().product();
                let values: Vec<f64> = match init {
                    Init::Zeros => vec![0.0; n],
                    Init::Ones => vec![1.0; n],
                    Init::Normal(std) | Init::FanIn(std) => {
                        let std = match init {
                            Init::FanIn(g) => {
                                let fan_in: usize = shape[1..].iter().product::<usize>().max(1);
                                g / (fan_in as f64).sqrt()
                            }
                            _ => std,
                        };
                        let dist = Normal::new(0.0, std).expect("finite std");
                        (0..n).map(|_| dist.sample(rng)).collect()
                    }
                };
                Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?
            }
            (None, Source::Load(_)) => unreachable!("load source errors on missing tensors"),
        };
        let t = if self.trainable {
            let var = Var::from_tensor(&t)?;
            let t = var.as_tensor().clone();
            self.store.vars.insert(full.clone(), var);
            t
        } else {
            t.detach()
        };
        self.store.tensors.insert(full, t.clone());
        Ok(t)
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub struct Linear {
    inner: candle_nn::Linear,
}

impl Linear {
    pub fn new(b: &mut Builder, d_in: usize, d_out: usize) -> Result<Self> {
        Self::with_init(b, d_in, d_out, Init::FanIn(1.0))
    }

    pub fn zeros(b: &mut Builder, d_in: usize, d_out: usize) -> Result<Self> {
        Self::with_init(b, d_in, d_out, Init::Zeros)
    }

    fn with_init(b: &mut Builder, d_in: usize, d_out: usize, init: Init) -> Result<Self> {
        let w = b.tensor("weight", &[d_out, d_in], init)?;
        let bias = b.tensor("bias", &[d_out], Init::Zeros)?;
        Ok(Self {
            inner: candle_nn::Linear::new(w, Some(bias)),
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.inner.forward(x)?)
    }
}

/// Square convolution with stride 1 and "same" padding, NCHW. Kernel 1 or 3.
pub struct Conv {
    weight: Tensor,
    bias: Tensor,
    k: usize,
}

impl Conv {
    pub fn new(b: &mut Builder, c_in: usize, c_out: usize, k: usize) -> Result<Self> {
        Self::with_init(b, c_in, c_out, k, Init::FanIn(1.0))
    }

    pub fn zeros(b: &mut Builder, c_in: usize, c_out: usize, k: usize) -> Result<Self> {
        Self::with_init(b, c_in, c_out, k, Init::Zeros)
    }

    fn with_init(b: &mut Builder, c_in: usize, c_out: usize, k: usize, init: Init) -> Result<Self> {
        assert!(k == 1 || k == 3, "kernel size {k} not supported");
        Ok(Self {
            weight: b.tensor("weight", &[c_out, c_in * k * k], init)?,
            bias: b.tensor("bias", &[c_out], Init::Zeros)?,
            k,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        let cols = if self.k == 1 {
            x.reshape((n, c, h * w))?
        } else {
            let p = x.pad_with_zeros(2, 1, 1)?.pad_with_zeros(3, 1, 1)?;
            let mut taps = Vec::with_capacity(9);
            for dy in 0..3 {
                for dx in 0..3 {
                    taps.push(p.narrow(2, dy, h)?.narrow(3, dx, w)?);
                }
            }
            Tensor::cat(&taps, 1)?.reshape((n, 9 * c, h * w))?
        };
        let out = self.weight.broadcast_matmul(&cols)?;
        let c_out = self.weight.dim(0)?;
        Ok(out
            .broadcast_add(&self.bias.reshape((1, c_out, 1))?)?
            .reshape((n, c_out, h, w))?)
    }
}

pub struct GroupNorm {
    gamma: Tensor,
    beta: Tensor,
    groups: usize,
}

impl GroupNorm {
    pub fn new(b: &mut Builder, groups: usize, channels: usize) -> Result<Self> {
        assert_eq!(channels % groups, 0);
        Ok(Self {
            gamma: b.tensor("gamma", &[channels], Init::Ones)?,
            beta: b.tensor("beta", &[channels], Init::Zeros)?,
            groups,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        let g = x.reshape((n, self.groups, (c / self.groups) * h * w))?;
        let g = normalize_last(&g, 1e-5)?;
        Ok(g.reshape((n, c, h, w))?
            .broadcast_mul(&self.gamma.reshape((1, c, 1, 1))?)?
            .broadcast_add(&self.beta.reshape((1, c, 1, 1))?)?)
    }
}

pub struct LayerNorm {
    gamma: Tensor,
    beta: Tensor,
}

impl LayerNorm {
    pub fn new(b: &mut Builder, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: b.tensor("gamma", &[dim], Init::Ones)?,
            beta: b.tensor("beta", &[dim], Init::Zeros)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(normalize_last(x, 1e-5)?
            .broadcast_mul(&self.gamma)?
            .broadcast_add(&self.beta)?)
    }
}

fn normalize_last(x: &Tensor, eps: f64) -> Result<Tensor> {
    let mean = x.mean_keepdim(D::Minus1)?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    Ok(centered.broadcast_div(&(var + eps)?.sqrt()?)?)
}

/// Multi-head attention with separate query and key/value inputs.
pub struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    heads: usize,
}

impl Attention {
    pub fn new(b: &mut Builder, d_model: usize, d_context: usize, heads: usize) -> Result<Self> {
        assert_eq!(d_model % heads, 0);
        Ok(Self {
            q: Linear::new(&mut b.sub("q"), d_model, d_model)?,
            k: Linear::new(&mut b.sub("k"), d_context, d_model)?,
            v: Linear::new(&mut b.sub("v"), d_context, d_model)?,
            out: Linear::new(&mut b.sub("out"), d_model, d_model)?,
            heads,
        })
    }

    /// `x`: `[B, N, d_model]`, `ctx`: `[B, M, d_context]`.
    pub fn forward(&self, x: &Tensor, ctx: &Tensor) -> Result<Tensor> {
        let (bsz, n, d) = x.dims3()?;
        let m = ctx.dim(1)?;
        let dh = d / self.heads;
        let split = |t: Tensor, len: usize| -> Result<Tensor> {
            Ok(t.reshape((bsz, len, self.heads, dh))?
                .transpose(1, 2)?
                .contiguous()?
                .reshape((bsz * self.heads, len, dh))?)
        };
        let q = split(self.q.forward(x)?, n)?;
        let k = split(self.k.forward(ctx)?, m)?;
        let v = split(self.v.forward(ctx)?, m)?;
        let scores = (q.matmul(&k.t()?)? / (dh as f64).sqrt())?;
        let attn = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let o = attn
            .matmul(&v)?
            .reshape((bsz, self.heads, n, dh))?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((bsz, n, d))?;
        self.out.forward(&o)
    }
}

/// `[B, C, H, W]` to `[B, C·f², H/f, W/f]`.
pub fn space_to_depth(x: &Tensor, f: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if h % f != 0 || w % f != 0 {
        return Err(ModelError::ShapeMismatch(format!(
            "{h}x{w} is not divisible by {f}"
        )));
    }
    Ok(x.reshape(vec![n, c, h / f, f, w / f, f])?
        .permute(vec![0, 1, 3, 5, 2, 4])?
        .contiguous()?
        .reshape((n, c * f * f, h / f, w / f))?)
}

/// Inverse of [`space_to_depth`].
pub fn depth_to_space(x: &Tensor, f: usize) -> Result<Tensor> {
    let (n, cf, h, w) = x.dims4()?;
    let c = cf / (f * f);
    Ok(x.reshape(vec![n, c, f, f, h, w])?
        .permute(vec![0, 1, 4, 2, 5, 3])?
        .contiguous()?
        .reshape((n, c, h * f, w * f))?)
}

/// Nearest-neighbour 2x upsampling built from broadcasts.
pub fn upsample2(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    Ok(x.reshape(vec![n, c, h, 1, w, 1])?
        .broadcast_as(vec![n, c, h, 2, w, 2])?
        .contiguous()?
        .reshape((n, c, 2 * h, 2 * w))?)
}

/// Sinusoidal embedding of (possibly fractional) timesteps, `[B, dim]`.
pub fn timestep_embedding(t: &[f64], dim: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let half = dim / 2;
    let mut v = Vec::with_capacity(t.len() * dim);
    for &ti in t {
        for i in 0..half {
            let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
            v.push((ti * freq).sin());
        }
        for i in 0..half {
            let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
            v.push((ti * freq).cos());
        }
    }
    Ok(Tensor::from_vec(v, (t.len(), dim), device)?.to_dtype(dtype)?)
}

/// Standard normal tensor drawn from a seeded ChaCha stream.
pub fn randn(rng: &mut ChaCha8Rng, shape: &[usize], dtype: DType, device: &Device) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    let v: Vec<f32> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Ok(Tensor::from_vec(v, shape, device)?.to_dtype(dtype)?)
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}
