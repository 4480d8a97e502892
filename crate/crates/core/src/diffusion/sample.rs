use candle_core::Tensor;
use rand_chacha::ChaCha8Rng;

use super::process::{normal_batch, tensor_to_grids, trajectory_rng};
use super::schedule::NoiseSchedule;
use super::Denoiser;
use crate::encoding::{ModelGrid, PadSpec};
use crate::error::{Error, Result};

/// Trajectories are pushed through the network this many at a time.
pub const DEFAULT_SAMPLE_BATCH: usize = 64;

fn check_model(model: &dyn Denoiser, schedule: &NoiseSchedule) -> Result<()> {
    if model.max_timestep() != schedule.steps() {
        return Err(Error::invalid(format!(
            "model trained for {} steps, schedule has {}",
            model.max_timestep(),
            schedule.steps()
        )));
    }
    Ok(())
}

/// Ancestral sampling from `x_T ~ N(0, I)` down to `t = 1`. Trajectory `i`
/// draws all its noise from [`trajectory_rng`]`(seed, i)`.
pub fn sample_unconditional(
    model: &dyn Denoiser,
    schedule: &NoiseSchedule,
    n: usize,
    pad: PadSpec,
    seed: u64,
    batch_size: usize,
) -> Result<Vec<ModelGrid>> {
    check_model(model, schedule)?;
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(batch_size.max(1)) {
        let end = (start + batch_size.max(1)).min(n);
        let mut streams: Vec<ChaCha8Rng> = (start..end).map(|i| trajectory_rng(seed, i)).collect();
        let x = ddpm_chain(model, schedule, &mut streams, pad)?;
        out.extend(tensor_to_grids(&x, pad)?);
    }
    Ok(out)
}

fn ddpm_chain(
    model: &dyn Denoiser,
    schedule: &NoiseSchedule,
    streams: &mut [ChaCha8Rng],
    pad: PadSpec,
) -> Result<Tensor> {
    let shape = pad.model_shape();
    let (dtype, device) = (model.dtype(), model.device().clone());
    let n = streams.len();
    let mut x = normal_batch(streams, shape, dtype, &device)?;
    for t in (1..=schedule.steps()).rev() {
        let eps = model.predict_noise(&x, &vec![t; n])?.detach();
        let mean = ddpm_mean(schedule, &x, &eps, t, model.x0_range())?;
        let sigma = schedule.reverse_coeffs(t).2;
        x = if t > 1 {
            let z = normal_batch(streams, shape, dtype, &device)?;
            (mean + (z * sigma)?)?
        } else {
            mean
        };
    }
    Ok(x)
}

/// DDIM sampling over every step `T → 0` with stochasticity `eta`
/// (`eta = 0` is deterministic given the initial noise).
pub fn ddim_sample(
    model: &dyn Denoiser,
    schedule: &NoiseSchedule,
    n: usize,
    pad: PadSpec,
    seed: u64,
    eta: f64,
    batch_size: usize,
) -> Result<Vec<ModelGrid>> {
    check_model(model, schedule)?;
    let shape = pad.model_shape();
    let (dtype, device) = (model.dtype(), model.device().clone());
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(batch_size.max(1)) {
        let end = (start + batch_size.max(1)).min(n);
        let mut streams: Vec<ChaCha8Rng> = (start..end).map(|i| trajectory_rng(seed, i)).collect();
        let m = streams.len();
        let mut x = normal_batch(&mut streams, shape, dtype, &device)?;
        for t in (1..=schedule.steps()).rev() {
            let eps = model.predict_noise(&x, &vec![t; m])?.detach();
            x = ddim_update(schedule, &x, &eps, t, eta, model.x0_range(), &mut streams, pad)?;
        }
        out.extend(tensor_to_grids(&x, pad)?);
    }
    Ok(out)
}

/// `x̂₀` from a noise prediction, projected onto `range` if given.
fn predicted_x0(schedule: &NoiseSchedule, x: &Tensor, eps: &Tensor, t: usize, range: (f64, f64)) -> Result<Tensor> {
    let (a, b) = schedule.forward_coeffs(t);
    Ok(((x - (eps * b)?)? / a)?.clamp(range.0, range.1)?)
}

/// Mean of the reverse step `t → t−1`. Without a range this is
/// `(x_t − β_t/√(1−ᾱ_t)·ε̂)/√(1−β_t)`; with one, the same posterior mean
/// written in terms of the projected `x̂₀`.
pub(crate) fn ddpm_mean(
    schedule: &NoiseSchedule,
    x: &Tensor,
    eps: &Tensor,
    t: usize,
    range: Option<(f64, f64)>,
) -> Result<Tensor> {
    match range {
        None => {
            let (c_x, c_eps, _) = schedule.reverse_coeffs(t);
            Ok(((x * c_x)? - (eps * c_eps)?)?)
        }
        Some(r) => {
            let x0 = predicted_x0(schedule, x, eps, t, r)?;
            let (c0, ct) = schedule.posterior_mean_coeffs(t);
            Ok(((x0 * c0)? + (x * ct)?)?)
        }
    }
}

/// One DDIM move `t → t−1` from a noise prediction. With a range, `x̂₀` is
/// projected first and the noise direction recomputed from it.
#[allow(clippy::too_many_arguments)]
pub(crate) fn ddim_update(
    schedule: &NoiseSchedule,
    x: &Tensor,
    eps: &Tensor,
    t: usize,
    eta: f64,
    range: Option<(f64, f64)>,
    streams: &mut [ChaCha8Rng],
    pad: PadSpec,
) -> Result<Tensor> {
    let (c_x, c_eps, sigma) = schedule.ddim_coeffs(t, t - 1, eta);
    let next = match range {
        None => ((x * c_x)? + (eps * c_eps)?)?,
        Some(r) => {
            let x0 = predicted_x0(schedule, x, eps, t, r)?;
            let (a, b) = schedule.forward_coeffs(t);
            let eps = ((x - (&x0 * a)?)? / b)?;
            // c_x·x + c_eps·ε = √ᾱ_s·x̂₀ + (c_x·√(1−ᾱ_t) + c_eps)·ε
            ((x0 * (c_x * a))? + (eps * (c_x * b + c_eps))?)?
        }
    };
    if sigma > 0.0 {
        let z = normal_batch(streams, pad.model_shape(), x.dtype(), x.device())?;
        Ok((next + (z * sigma)?)?)
    } else {
        Ok(next)
    }
}
