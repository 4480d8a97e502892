use candle_core::{Tensor, D};
use rand_chacha::ChaCha8Rng;

use super::im2col::{Im2Col, Patches};
use super::params::ParamStore;
use crate::error::Result;

pub(crate) struct Conv2d {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    padding: usize,
    groups: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        groups: usize,
    ) -> Result<Self> {
        let fan_in = (c_in / groups) * kernel * kernel;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = ps.uniform(
            format!("{name}.weight"),
            &[c_out, c_in / groups, kernel, kernel],
            bound,
            rng,
        )?;
        let bias = ps.uniform(format!("{name}.bias"), &[c_out], bound, rng)?;
        Ok(Self {
            weight,
            bias,
            stride,
            padding: kernel / 2,
            groups,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, c_in, h, w) = x.dims4()?;
        let (c_out, _, k, _) = self.weight.dims4()?;
        let depthwise = self.groups == c_in && c_out == c_in && self.groups > 1;
        if self.groups != 1 && !depthwise {
            let y = x.conv2d(&self.weight, self.padding, self.stride, 1, self.groups)?;
            return Ok(y.broadcast_add(&self.bias.reshape((1, c_out, 1, 1))?)?);
        }
        let patches = Patches {
            k,
            stride: self.stride,
            pad: self.padding,
            n,
            c: c_in,
            h,
            w,
        };
        let (ho, wo) = patches.out_hw();
        let cols = x.contiguous()?.apply_op1(Im2Col(patches))?;
        let y = if depthwise {
            let w2 = self.weight.reshape((c_in, k * k, 1))?;
            cols.reshape((c_in, k * k, n * ho * wo))?
                .broadcast_mul(&w2)?
                .sum(1)?
        } else {
            self.weight.reshape((c_out, c_in * k * k))?.matmul(&cols)?
        };
        let y = y.broadcast_add(&self.bias.reshape((c_out, 1))?)?;
        Ok(y.reshape((c_out, n, ho, wo))?.transpose(0, 1)?.contiguous()?)
    }
}

pub(crate) struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_in: usize,
        d_out: usize,
    ) -> Result<Self> {
        let bound = 1.0 / (d_in as f64).sqrt();
        Ok(Self {
            weight: ps.uniform(format!("{name}.weight"), &[d_out, d_in], bound, rng)?,
            bias: ps.uniform(format!("{name}.bias"), &[d_out], bound, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(&self.weight.t()?)?.broadcast_add(&self.bias)?)
    }
}

pub(crate) struct GroupNorm {
    groups: usize,
    gamma: Tensor,
    beta: Tensor,
}

impl GroupNorm {
    pub fn new(ps: &mut ParamStore, name: &str, groups: usize, channels: usize) -> Result<Self> {
        Ok(Self {
            groups,
            gamma: ps.constant(format!("{name}.weight"), &[channels], 1.0)?,
            beta: ps.constant(format!("{name}.bias"), &[channels], 0.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        let xg = x.reshape((n, self.groups, (c / self.groups) * h * w))?;
        let mean = xg.mean_keepdim(D::Minus1)?;
        let centered = xg.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&var.affine(1.0, 1e-5)?.sqrt()?)?;
        let normed = normed.reshape((n, c, h, w))?;
        Ok(normed
            .broadcast_mul(&self.gamma.reshape((1, c, 1, 1))?)?
            .broadcast_add(&self.beta.reshape((1, c, 1, 1))?)?)
    }
}

/// Nearest-neighbour ×2 upsampling through broadcasting, so it
/// differentiates with the primitive ops.
pub(crate) fn upsample_nearest2x(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    Ok(x.reshape((n, c, h, 1, w, 1))?
        .broadcast_as((n, c, h, 2, w, 2))?
        .reshape((n, c, 2 * h, 2 * w))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    #[test]
    fn patch_convolution_matches_candle() {
        let dev = Device::Cpu;
        let cases = [
            (3, 5, 3, 1, 1),
            (4, 4, 3, 2, 1),
            (6, 2, 1, 1, 1),
            (4, 4, 7, 1, 4),
            (3, 6, 3, 2, 1),
        ];
        for (seed, (c_in, c_out, k, stride, groups)) in cases.into_iter().enumerate() {
            let mut ps = ParamStore::new(DType::F64, dev.clone());
            let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed as u64);
            let conv = Conv2d::new(&mut ps, &mut rng, "c", c_in, c_out, k, stride, groups).unwrap();
            let x = Tensor::randn(0f64, 1.0, (2, c_in, 7, 6), &dev).unwrap();
            let got = conv.forward(&x).unwrap();
            let want = x
                .conv2d(&conv.weight, conv.padding, stride, 1, groups)
                .unwrap()
                .broadcast_add(&conv.bias.reshape((1, c_out, 1, 1)).unwrap())
                .unwrap();
            assert_eq!(got.dims(), want.dims());
            let diff = (got - want).unwrap().abs().unwrap().max_all().unwrap();
            assert!(diff.to_scalar::<f64>().unwrap() < 1e-12);
        }
    }

    #[test]
    fn patch_convolution_gradients_match_candle() {
        let dev = Device::Cpu;
        for (c_in, c_out, k, stride, groups) in [(3, 4, 3, 1, 1), (4, 4, 3, 2, 1), (4, 4, 7, 1, 4)] {
            let mut ps = ParamStore::new(DType::F64, dev.clone());
            let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(9);
            let conv = Conv2d::new(&mut ps, &mut rng, "c", c_in, c_out, k, stride, groups).unwrap();
            let x = candle_core::Var::from_tensor(&Tensor::randn(0f64, 1.0, (2, c_in, 6, 4), &dev).unwrap()).unwrap();
            let probe = Tensor::randn(0f64, 1.0, conv.forward(&x).unwrap().dims(), &dev).unwrap();
            let grads = |y: Tensor| {
                let g = (y * &probe).unwrap().sum_all().unwrap().backward().unwrap();
                let gx = g.get(x.as_tensor()).unwrap().clone();
                let gw = g.get(&conv.weight).unwrap().clone();
                (gx, gw)
            };
            let (ax, aw) = grads(conv.forward(&x).unwrap());
            let (bx, bw) = grads(x.conv2d(&conv.weight, conv.padding, stride, 1, groups).unwrap());
            for (a, b) in [(ax, bx), (aw, bw)] {
                let d = (a - b).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f64>().unwrap();
                assert!(d < 1e-10, "gradient mismatch {d}");
            }
        }
    }

    #[test]
    fn upsample_repeats_cells() {
        let x = Tensor::new(&[[[[1f32, 2.], [3., 4.]]]], &Device::Cpu).unwrap();
        let y = upsample_nearest2x(&x).unwrap();
        let v: Vec<Vec<f32>> = y.squeeze(0).unwrap().squeeze(0).unwrap().to_vec2().unwrap();
        assert_eq!(v[0], vec![1., 1., 2., 2.]);
        assert_eq!(v[3], vec![3., 3., 4., 4.]);
    }

    #[test]
    fn group_norm_standardizes() {
        let mut ps = ParamStore::new(DType::F64, Device::Cpu);
        let gn = GroupNorm::new(&mut ps, "gn", 2, 4).unwrap();
        let x = Tensor::arange(0f64, 32.0, &Device::Cpu)
            .unwrap()
            .reshape((1, 4, 2, 4))
            .unwrap();
        let y = gn.forward(&x).unwrap();
        let g = y.reshape((2, 16)).unwrap();
        let mean: Vec<f64> = g.mean(1).unwrap().to_vec1().unwrap();
        assert!(mean.iter().all(|m| m.abs() < 1e-12));
    }
}
