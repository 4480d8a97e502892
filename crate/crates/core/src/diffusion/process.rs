use candle_core::{DType, Device, Tensor};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::schedule::NoiseSchedule;
use super::Denoiser;
use crate::encoding::{ModelGrid, PadSpec};
use crate::error::{Error, Result};

/// Draw `x_t ~ q(x_t | x_0)` with explicit noise: `√ᾱ_t·x0 + √(1−ᾱ_t)·eps`.
pub fn forward_sample(
    schedule: &NoiseSchedule,
    x0: &ModelGrid,
    t: usize,
    eps: &Array2<f64>,
) -> Result<ModelGrid> {
    schedule.check_step(t)?;
    check_same_shape(&x0.values, eps)?;
    let (a, b) = schedule.forward_coeffs(t);
    ModelGrid::new(&x0.values * a + eps * b, x0.pad)
}

/// One ancestral step `x_t → x_{t−1}` given the predicted noise and a
/// standard-normal draw `z` (ignored at `t = 1`).
pub fn reverse_step(
    schedule: &NoiseSchedule,
    x_t: &ModelGrid,
    t: usize,
    eps_hat: &Array2<f64>,
    z: &Array2<f64>,
) -> Result<ModelGrid> {
    schedule.check_step(t)?;
    check_same_shape(&x_t.values, eps_hat)?;
    check_same_shape(&x_t.values, z)?;
    let (c_x, c_eps, sigma) = schedule.reverse_coeffs(t);
    let mean = &x_t.values * c_x - eps_hat * c_eps;
    let values = if sigma == 0.0 { mean } else { mean + z * sigma };
    ModelGrid::new(values, x_t.pad)
}

fn check_same_shape(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "shape mismatch: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Independent random stream for trajectory `index` under a master seed.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

pub fn normal_grid(rng: &mut impl Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.sample(StandardNormal))
}

/// Stack one standard-normal `(1, H, W)` draw per stream into a batch.
pub(crate) fn normal_batch(
    streams: &mut [ChaCha8Rng],
    shape: (usize, usize),
    dtype: DType,
    device: &Device,
) -> Result<Tensor> {
    let (h, w) = shape;
    let mut flat = Vec::with_capacity(streams.len() * h * w);
    for rng in streams.iter_mut() {
        flat.extend((0..h * w).map(|_| rng.sample::<f64, _>(StandardNormal)));
    }
    Ok(Tensor::from_vec(flat, (streams.len(), 1, h, w), device)?.to_dtype(dtype)?)
}

pub(crate) fn grids_to_tensor(grids: &[&Array2<f64>], dtype: DType, device: &Device) -> Result<Tensor> {
    let (h, w) = grids
        .first()
        .map(|g| g.dim())
        .ok_or_else(|| Error::invalid("empty batch"))?;
    let mut flat = Vec::with_capacity(grids.len() * h * w);
    for g in grids {
        check_same_shape(grids[0], g)?;
        flat.extend(g.iter().copied());
    }
    Ok(Tensor::from_vec(flat, (grids.len(), 1, h, w), device)?.to_dtype(dtype)?)
}

pub(crate) fn tensor_to_grids(x: &Tensor, pad: PadSpec) -> Result<Vec<ModelGrid>> {
    let (n, _, h, w) = x.dims4()?;
    let flat: Vec<f64> = x.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
    if let Some(bad) = flat.iter().find(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("sampler produced non-finite value {bad}")));
    }
    flat.chunks(h * w)
        .take(n)
        .map(|c| ModelGrid::new(Array2::from_shape_vec((h, w), c.to_vec()).expect("chunk"), pad))
        .collect()
}

/// Per-sample `(N, 1, 1, 1)` coefficient column.
pub(crate) fn coeff_column(values: &[f64], dtype: DType, device: &Device) -> Result<Tensor> {
    Ok(Tensor::from_vec(values.to_vec(), (values.len(), 1, 1, 1), device)?.to_dtype(dtype)?)
}

/// Noise-prediction loss: for each sample draw `t ~ U{1..T}` and
/// `ε ~ N(0, I)`, form `x_t`, and return the mean squared error between `ε`
/// and the model's prediction (mean over cells and batch).
pub fn training_loss(
    model: &dyn Denoiser,
    schedule: &NoiseSchedule,
    x0: &Tensor,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    let (n, _, h, w) = x0.dims4()?;
    if n == 0 {
        return Err(Error::invalid("empty training batch"));
    }
    let steps: Vec<usize> = (0..n).map(|_| rng.random_range(1..=schedule.steps())).collect();
    let (a, b): (Vec<f64>, Vec<f64>) = steps.iter().map(|&t| schedule.forward_coeffs(t)).unzip();
    let eps_flat: Vec<f64> = (0..n * h * w).map(|_| rng.sample(StandardNormal)).collect();
    let dtype = x0.dtype();
    let device = x0.device();
    let eps = Tensor::from_vec(eps_flat, (n, 1, h, w), device)?.to_dtype(dtype)?;
    let x_t = (x0.broadcast_mul(&coeff_column(&a, dtype, device)?)?
        + eps.broadcast_mul(&coeff_column(&b, dtype, device)?)?)?;
    let pred = model.predict_noise(&x_t, &steps)?;
    Ok((pred - eps)?.sqr()?.mean_all()?)
}
