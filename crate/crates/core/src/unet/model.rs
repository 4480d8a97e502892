use candle_core::{DType, Device, Tensor};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{BlockKind, UNetConfig};
use super::embed::sinusoidal_embed;
use super::layers::{upsample_nearest2x, Conv2d, GroupNorm, Linear};
use super::params::ParamStore;
use crate::diffusion::Denoiser;
use crate::encoding::ModelGrid;
use crate::error::{Error, Result};

enum Block {
    Resnet {
        norm1: GroupNorm,
        conv1: Conv2d,
        time: Linear,
        norm2: GroupNorm,
        conv2: Conv2d,
        skip: Option<Conv2d>,
    },
    Convnext {
        depthwise: Conv2d,
        time: Linear,
        norm: GroupNorm,
        expand: Conv2d,
        project: Conv2d,
        skip: Option<Conv2d>,
    },
}

impl Block {
    fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cfg: &UNetConfig,
        c_in: usize,
        c_out: usize,
    ) -> Result<Self> {
        let skip = if c_in != c_out {
            Some(Conv2d::new(ps, rng, &format!("{name}.skip"), c_in, c_out, 1, 1, 1)?)
        } else {
            None
        };
        let g = cfg.norm_groups;
        Ok(match cfg.block_kind {
            BlockKind::Resnet => Block::Resnet {
                norm1: GroupNorm::new(ps, &format!("{name}.norm1"), g, c_in)?,
                conv1: Conv2d::new(ps, rng, &format!("{name}.conv1"), c_in, c_out, 3, 1, 1)?,
                time: Linear::new(ps, rng, &format!("{name}.time"), cfg.time_embed_dim, c_out)?,
                norm2: GroupNorm::new(ps, &format!("{name}.norm2"), g, c_out)?,
                conv2: Conv2d::new(ps, rng, &format!("{name}.conv2"), c_out, c_out, 3, 1, 1)?,
                skip,
            },
            BlockKind::Convnext => Block::Convnext {
                depthwise: Conv2d::new(ps, rng, &format!("{name}.dw"), c_in, c_in, 7, 1, c_in)?,
                time: Linear::new(ps, rng, &format!("{name}.time"), cfg.time_embed_dim, c_in)?,
                norm: GroupNorm::new(ps, &format!("{name}.norm"), 1, c_in)?,
                expand: Conv2d::new(ps, rng, &format!("{name}.expand"), c_in, 2 * c_out, 1, 1, 1)?,
                project: Conv2d::new(ps, rng, &format!("{name}.project"), 2 * c_out, c_out, 1, 1, 1)?,
                skip,
            },
        })
    }

    fn forward(&self, x: &Tensor, temb: &Tensor) -> Result<Tensor> {
        let n = x.dim(0)?;
        match self {
            Block::Resnet {
                norm1,
                conv1,
                time,
                norm2,
                conv2,
                skip,
            } => {
                let h = conv1.forward(&norm1.forward(x)?.silu()?)?;
                let c = h.dim(1)?;
                let t = time.forward(temb)?.reshape((n, c, 1, 1))?;
                let h = h.broadcast_add(&t)?;
                let h = conv2.forward(&norm2.forward(&h)?.silu()?)?;
                let res = match skip {
                    Some(s) => s.forward(x)?,
                    None => x.clone(),
                };
                Ok((h + res)?)
            }
            Block::Convnext {
                depthwise,
                time,
                norm,
                expand,
                project,
                skip,
            } => {
                let h = depthwise.forward(x)?;
                let c = h.dim(1)?;
                let h = h.broadcast_add(&time.forward(temb)?.reshape((n, c, 1, 1))?)?;
                let h = project.forward(&expand.forward(&norm.forward(&h)?)?.gelu()?)?;
                let res = match skip {
                    Some(s) => s.forward(x)?,
                    None => x.clone(),
                };
                Ok((h + res)?)
            }
        }
    }
}

struct Attention {
    norm: GroupNorm,
    qkv: Conv2d,
    proj: Conv2d,
    heads: usize,
}

impl Attention {
    fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cfg: &UNetConfig,
        c: usize,
    ) -> Result<Self> {
        Ok(Self {
            norm: GroupNorm::new(ps, &format!("{name}.norm"), cfg.norm_groups, c)?,
            qkv: Conv2d::new(ps, rng, &format!("{name}.qkv"), c, 3 * c, 1, 1, 1)?,
            proj: Conv2d::new(ps, rng, &format!("{name}.proj"), c, c, 1, 1, 1)?,
            heads: cfg.attention_heads,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        let hw = h * w;
        let d = c / self.heads;
        let qkv = self.qkv.forward(&self.norm.forward(x)?)?;
        let part = |i: usize| -> Result<Tensor> {
            Ok(qkv
                .narrow(1, i * c, c)?
                .contiguous()?
                .reshape((n * self.heads, d, hw))?)
        };
        let q = part(0)?.transpose(1, 2)?.contiguous()?;
        let k = part(1)?;
        let v = part(2)?;
        let scores = (q.matmul(&k)? * (1.0 / (d as f64).sqrt()))?;
        let attn = candle_nn::ops::softmax(&scores, candle_core::D::Minus1)?;
        let out = v.matmul(&attn.t()?.contiguous()?)?;
        let out = self.proj.forward(&out.reshape((n, c, h, w))?)?;
        Ok((out + x)?)
    }
}

struct Level {
    block: Block,
    attn: Option<Attention>,
    resample: Option<Conv2d>,
}

/// The noise-prediction network ε_θ(x_t, t).
pub struct UNet {
    config: UNetConfig,
    max_timestep: usize,
    params: ParamStore,
    time_fc1: Linear,
    time_fc2: Linear,
    conv_in: Conv2d,
    down: Vec<Level>,
    mid1: Block,
    mid_attn: Attention,
    mid2: Block,
    up: Vec<Level>,
    norm_out: GroupNorm,
    conv_out: Conv2d,
}

impl UNet {
    /// Build a network with weights drawn from `seed`. `max_timestep` is the
    /// diffusion length T; inputs with `t > T` are rejected.
    pub fn new(
        config: UNetConfig,
        max_timestep: usize,
        seed: u64,
        dtype: DType,
        device: &Device,
    ) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamStore::new(dtype, device.clone());
        let rng = &mut rng;
        let cfg = &config;
        let base = cfg.base_channels;

        let time_fc1 = Linear::new(&mut ps, rng, "time.fc1", base, cfg.time_embed_dim)?;
        let time_fc2 = Linear::new(&mut ps, rng, "time.fc2", cfg.time_embed_dim, cfg.time_embed_dim)?;
        let conv_in = Conv2d::new(&mut ps, rng, "conv_in", 1, base, 3, 1, 1)?;

        let scales = cfg.scales();
        let mut down = Vec::with_capacity(scales);
        let mut c_prev = base;
        for s in 0..scales {
            let c = cfg.channels(s);
            let name = format!("down.{s}");
            let block = Block::new(&mut ps, rng, &format!("{name}.block"), cfg, c_prev, c)?;
            let attn = if cfg.attention[s] {
                Some(Attention::new(&mut ps, rng, &format!("{name}.attn"), cfg, c)?)
            } else {
                None
            };
            let resample = if s + 1 < scales {
                Some(Conv2d::new(&mut ps, rng, &format!("{name}.downsample"), c, c, 3, 2, 1)?)
            } else {
                None
            };
            down.push(Level {
                block,
                attn,
                resample,
            });
            c_prev = c;
        }

        let c_mid = cfg.channels(scales - 1);
        let mid1 = Block::new(&mut ps, rng, "mid.block1", cfg, c_mid, c_mid)?;
        let mid_attn = Attention::new(&mut ps, rng, "mid.attn", cfg, c_mid)?;
        let mid2 = Block::new(&mut ps, rng, "mid.block2", cfg, c_mid, c_mid)?;

        let mut up = Vec::with_capacity(scales);
        for s in (0..scales).rev() {
            let c = cfg.channels(s);
            let name = format!("up.{s}");
            let block = Block::new(&mut ps, rng, &format!("{name}.block"), cfg, 2 * c, c)?;
            let attn = if cfg.attention[s] {
                Some(Attention::new(&mut ps, rng, &format!("{name}.attn"), cfg, c)?)
            } else {
                None
            };
            let resample = if s > 0 {
                let c_next = cfg.channels(s - 1);
                Some(Conv2d::new(&mut ps, rng, &format!("{name}.upsample"), c, c_next, 3, 1, 1)?)
            } else {
                None
            };
            up.push(Level {
                block,
                attn,
                resample,
            });
        }

        let norm_out = GroupNorm::new(&mut ps, "norm_out", cfg.norm_groups, base)?;
        let conv_out = Conv2d::new(&mut ps, rng, "conv_out", base, 1, 3, 1, 1)?;

        Ok(Self {
            config,
            max_timestep,
            params: ps,
            time_fc1,
            time_fc2,
            conv_in,
            down,
            mid1,
            mid_attn,
            mid2,
            up,
            norm_out,
            conv_out,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn max_timestep(&self) -> usize {
        self.max_timestep
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    fn time_embedding(&self, t: &[usize]) -> Result<Tensor> {
        let dim = self.config.base_channels;
        let mut flat = Vec::with_capacity(t.len() * dim);
        for &step in t {
            if step == 0 || step > self.max_timestep {
                return Err(Error::invalid(format!(
                    "timestep {step} outside [1, {}]",
                    self.max_timestep
                )));
            }
            flat.extend(sinusoidal_embed(step, dim)?);
        }
        let emb = Tensor::from_vec(flat, (t.len(), dim), self.params.device())?
            .to_dtype(self.params.dtype())?;
        let h = self.time_fc1.forward(&emb)?.silu()?;
        Ok(self.time_fc2.forward(&h)?.silu()?)
    }

    /// Run the network on a `(N, 1, H, W)` batch with one timestep per sample.
    pub fn forward(&self, x: &Tensor, t: &[usize]) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        if c != 1 {
            return Err(Error::invalid(format!("expected one input channel, got {c}")));
        }
        if n != t.len() {
            return Err(Error::invalid(format!("{n} samples but {} timesteps", t.len())));
        }
        let div = self.config.required_divisor();
        if h % div != 0 || w % div != 0 {
            return Err(Error::invalid(format!(
                "grid {h}x{w} not divisible by {div} for a {}-scale network",
                self.config.scales()
            )));
        }
        let temb = self.time_embedding(t)?;
        let mut h = self.conv_in.forward(x)?;
        let mut skips = Vec::with_capacity(self.down.len());
        for level in &self.down {
            h = level.block.forward(&h, &temb)?;
            if let Some(a) = &level.attn {
                h = a.forward(&h)?;
            }
            skips.push(h.clone());
            if let Some(d) = &level.resample {
                h = d.forward(&h)?;
            }
        }
        h = self.mid1.forward(&h, &temb)?;
        h = self.mid_attn.forward(&h)?;
        h = self.mid2.forward(&h, &temb)?;
        for level in &self.up {
            let skip = skips.pop().expect("one skip per level");
            h = Tensor::cat(&[&h, &skip], 1)?;
            h = level.block.forward(&h, &temb)?;
            if let Some(a) = &level.attn {
                h = a.forward(&h)?;
            }
            if let Some(u) = &level.resample {
                h = u.forward(&upsample_nearest2x(&h)?)?;
            }
        }
        self.conv_out.forward(&self.norm_out.forward(&h)?.silu()?)
    }

    /// Predict the noise in a single model grid.
    pub fn apply(&self, x_t: &ModelGrid, t: usize) -> Result<Array2<f64>> {
        let (h, w) = x_t.shape();
        let flat: Vec<f64> = x_t.values.iter().copied().collect();
        let x = Tensor::from_vec(flat, (1, 1, h, w), self.params.device())?
            .to_dtype(self.params.dtype())?;
        let y = self.forward(&x, &[t])?;
        let v: Vec<f64> = y.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
        Ok(Array2::from_shape_vec((h, w), v).expect("shape preserved"))
    }
}

impl Denoiser for UNet {
    fn predict_noise(&self, x_t: &Tensor, t: &[usize]) -> Result<Tensor> {
        self.forward(x_t, t)
    }

    fn device(&self) -> &Device {
        self.params.device()
    }

    fn dtype(&self) -> DType {
        self.params.dtype()
    }

    fn max_timestep(&self) -> usize {
        self.max_timestep
    }
}
