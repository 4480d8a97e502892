use candle_core::{DType, Tensor, Var};
use ndarray::{s, Array2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{transition_schedule, Algorithm, InpaintConfig, Move};
use crate::diffusion::{
    ddim_update, ddpm_mean, grids_to_tensor, normal_batch, tensor_to_grids, trajectory_rng, Denoiser,
    NoiseSchedule, DEFAULT_SAMPLE_BATCH,
};
use crate::encoding::{ModelGrid, ObservationMask};
use crate::error::{Error, Result};

/// Per-run summary written next to conditional samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpaintDiagnostics {
    pub algorithm: Algorithm,
    pub n_trajectories: usize,
    pub seed: u64,
    /// Largest |sample − observed| over observed data cells and trajectories.
    pub observed_max_error: f64,
    /// Mean boundary score over trajectories, for past-only masks.
    pub boundary_discontinuity: Option<f64>,
    pub network_evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct ConditionalSampleResult {
    pub grids: Vec<ModelGrid>,
    pub mask: ObservationMask,
    pub diagnostics: InpaintDiagnostics,
}

impl ConditionalSampleResult {
    pub fn diagnostics_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.diagnostics)?)
    }
}

/// Max |grid − observed| over observed data cells.
pub fn observed_max_error(grid: &ModelGrid, observed: &ModelGrid, mask: &ObservationMask) -> f64 {
    let (w, l) = mask.shape();
    let mut worst = 0.0f64;
    for i in 0..w {
        for j in 0..l {
            if mask.is_observed(i, j) {
                worst = worst.max((grid.values[[i, j]] - observed.values[[i, j]]).abs());
            }
        }
    }
    worst
}

/// Jump at the observed/forecast boundary relative to a typical week-to-week
/// change. With `d(w)` the mean over locations of `|v(w) − v(w−1)|`, returns
/// `d(ref) − mean of d(w) over every other interior week`, so a coherent
/// series scores near 0 and a step of size 1 at the boundary scores about 1.
pub fn boundary_discontinuity(grid: &ModelGrid, mask: &ObservationMask) -> Result<f64> {
    let reference = mask
        .past_only_reference()
        .filter(|&r| r >= 2)
        .ok_or_else(|| Error::invalid("boundary score needs a past-only mask with reference week ≥ 2"))?;
    let (weeks, locs) = mask.shape();
    if grid.pad.data_shape() != (weeks, locs) {
        return Err(Error::invalid("grid and mask shapes differ"));
    }
    if weeks < 3 {
        return Err(Error::invalid("boundary score needs at least 3 weeks"));
    }
    let v = grid.values.slice(s![..weeks, ..locs]);
    let step = |w: usize| {
        (0..locs).map(|l| (v[[w, l]] - v[[w - 1, l]]).abs()).sum::<f64>() / locs as f64
    };
    let b = reference - 1;
    let others: Vec<f64> = (1..weeks).filter(|&w| w != b).map(step).collect();
    Ok(step(b) - others.iter().sum::<f64>() / others.len() as f64)
}

struct Conditioning {
    observed: Tensor,
    mask: Tensor,
    /// Mask restricted to the data region, for fidelity.
    data_mask: Tensor,
    /// `x̂₀` projection range, widened to cover the observed values.
    range: Option<(f64, f64)>,
}

fn setup(
    model: &dyn Denoiser,
    schedule: &NoiseSchedule,
    observed: &ModelGrid,
    mask: &ObservationMask,
    cfg: &InpaintConfig,
) -> Result<Conditioning> {
    cfg.validate()?;
    if model.max_timestep() != schedule.steps() {
        return Err(Error::invalid(format!(
            "model trained for {} steps, schedule has {}",
            model.max_timestep(),
            schedule.steps()
        )));
    }
    let pad = observed.pad;
    let m = mask.to_model(&pad)?;
    let mut data = Array2::zeros(pad.model_shape());
    data.slice_mut(s![..pad.weeks, ..pad.locations])
        .assign(&mask.observed().mapv(|b| if b { 1.0 } else { 0.0 }));
    let (dtype, dev) = (model.dtype(), model.device());
    let range = model.x0_range().map(|(lo, hi)| {
        observed
            .values
            .iter()
            .zip(&m)
            .filter(|(_, &k)| k > 0.0)
            .fold((lo, hi), |(lo, hi), (&v, _)| (lo.min(v), hi.max(v)))
    });
    Ok(Conditioning {
        range,
        observed: grids_to_tensor(&[&observed.values], dtype, dev)?,
        mask: grids_to_tensor(&[&m], dtype, dev)?,
        data_mask: grids_to_tensor(&[&data], dtype, dev)?,
    })
}

fn renoise(schedule: &NoiseSchedule, x: &Tensor, t: usize, streams: &mut [ChaCha8Rng]) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    let b = schedule.beta(t);
    let z = normal_batch(streams, (h, w), x.dtype(), x.device())?;
    Ok(((x * (1.0 - b).sqrt())? + (z * b.sqrt())?)?)
}

fn check_finite(x: &Tensor, what: &str) -> Result<()> {
    let s = x.sqr()?.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    if s.is_finite() {
        Ok(())
    } else {
        Err(Error::numeric(format!("{what} produced a non-finite latent")))
    }
}

fn chunks(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n)
        .step_by(DEFAULT_SAMPLE_BATCH)
        .map(move |s| (s, (s + DEFAULT_SAMPLE_BATCH).min(n)))
}

fn finish(
    grids: Vec<ModelGrid>,
    observed: &ModelGrid,
    mask: &ObservationMask,
    cfg: &InpaintConfig,
    seed: u64,
    evals: usize,
) -> Result<ConditionalSampleResult> {
    let observed_max_error = grids
        .iter()
        .map(|g| observed_max_error(g, observed, mask))
        .fold(0.0, f64::max);
    let boundary_discontinuity = match mask.past_only_reference() {
        Some(r) if r >= 2 && !grids.is_empty() => {
            let scores = grids
                .iter()
                .map(|g| boundary_discontinuity(g, mask))
                .collect::<Result<Vec<_>>>()?;
            Some(scores.iter().sum::<f64>() / scores.len() as f64)
        }
        _ => None,
    };
    Ok(ConditionalSampleResult {
        diagnostics: InpaintDiagnostics {
            algorithm: cfg.algorithm,
            n_trajectories: grids.len(),
            seed,
            observed_max_error,
            boundary_discontinuity,
            network_evaluations: evals,
        },
        grids,
        mask: mask.clone(),
    })
}

/// Overwrite sampling: before every reverse step the observed cells are
/// replaced by the observation noised to the current level; after the last
/// step they are set to the observation exactly.
pub fn repaint_sample(
    model: &dyn Denoiser,
    schedule: &NoiseSchedule,
    observed: &ModelGrid,
    mask: &ObservationMask,
    cfg: &InpaintConfig,
    seed: u64,
) -> Result<ConditionalSampleResult> {
    if mask.n_observed() == 0 {
        return Err(Error::invalid(
            "mask has no observed cells; use unconditional sampling instead",
        ));
    }
    let cond = setup(model, schedule, observed, mask, cfg)?;
    let pad = observed.pad;
    let shape = pad.model_shape();
    let (dtype, dev) = (model.dtype(), model.device().clone());
    let moves = transition_schedule(schedule.steps(), cfg.jump_length, cfg.time_travel);
    let keep = cond.mask.affine(-1.0, 1.0)?;
    let mut grids = Vec::with_capacity(cfg.n_trajectories);
    let mut evals = 0;
    for (start, end) in chunks(cfg.n_trajectories) {
        let mut streams: Vec<ChaCha8Rng> = (start..end).map(|i| trajectory_rng(seed, i)).collect();
        let n = streams.len();
        let mut x = normal_batch(&mut streams, shape, dtype, &dev)?;
        for mv in &moves {
            match *mv {
                Move::Denoise(t) => {
                    let (a, b) = schedule.forward_coeffs(t);
                    let eps = normal_batch(&mut streams, shape, dtype, &dev)?;
                    let known = (&cond.observed * a)?.broadcast_add(&(eps * b)?)?;
                    x = (known.broadcast_mul(&cond.mask)? + x.broadcast_mul(&keep)?)?;
                    let eps_hat = model.predict_noise(&x, &vec![t; n])?.detach();
                    evals += 1;
                    let mean = ddpm_mean(schedule, &x, &eps_hat, t, cond.range)?;
                    let sigma = schedule.reverse_coeffs(t).2;
                    x = if t > 1 {
                        let z = normal_batch(&mut streams, shape, dtype, &dev)?;
                        (mean + (z * sigma)?)?
                    } else {
                        mean
                    };
                }
                Move::Renoise(t) => x = renoise(schedule, &x, t, &mut streams)?,
            }
        }
        x = x.broadcast_mul(&keep)?.broadcast_add(&cond.observed.broadcast_mul(&cond.mask)?)?;
        let mut out = tensor_to_grids(&x, pad)?;
        // exact copy, free of any float round-off in the model dtype
        for g in &mut out {
            for ((w, l), v) in g.values.indexed_iter_mut() {
                if w < pad.weeks && l < pad.locations && mask.is_observed(w, l) {
                    *v = observed.values[[w, l]];
                }
            }
        }
        grids.extend(out);
    }
    finish(grids, observed, mask, cfg, seed, evals)
}

/// Optimised-DDIM inpainting. At every visited time index the latent `x_t`
/// takes `refine_steps` gradient steps on `Σ_mask (x̂₀(x_t) − y)²`, where
/// `x̂₀` is the model's clean-grid prediction, then a DDIM step is taken from
/// the refined latent. Steps are scaled by `ᾱ_t` so that one step shrinks the
/// observed-cell residual of `x̂₀` by about `1 − 2·refine_step_size`.
///
/// With `refine_steps = 0`, no time travel and nothing observed this is
/// exactly [`ddim_sample`](crate::diffusion::ddim_sample).
pub fn copaint_sample(
    model: &dyn Denoiser,
    schedule: &NoiseSchedule,
    observed: &ModelGrid,
    mask: &ObservationMask,
    cfg: &InpaintConfig,
    seed: u64,
) -> Result<ConditionalSampleResult> {
    if cfg.algorithm != Algorithm::CopaintOddim {
        return Err(Error::invalid("copaint_sample needs algorithm = copaint-oddim"));
    }
    let cond = setup(model, schedule, observed, mask, cfg)?;
    let pad = observed.pad;
    let shape = pad.model_shape();
    let (dtype, dev) = (model.dtype(), model.device().clone());
    let moves = transition_schedule(schedule.steps(), cfg.jump_length, cfg.time_travel);
    let any_observed = mask.n_observed() > 0 || pad.model_shape() != pad.data_shape();
    let mut grids = Vec::with_capacity(cfg.n_trajectories);
    let mut evals = 0;
    for (start, end) in chunks(cfg.n_trajectories) {
        let mut streams: Vec<ChaCha8Rng> = (start..end).map(|i| trajectory_rng(seed, i)).collect();
        let n = streams.len();
        let mut x = normal_batch(&mut streams, shape, dtype, &dev)?;
        for mv in &moves {
            match *mv {
                Move::Denoise(t) => {
                    if any_observed {
                        let polish = if t == 1 { cfg.max_polish_steps } else { 0 };
                        x = refine(model, schedule, &cond, x, t, cfg, polish, &mut evals)?;
                    }
                    let eps = model.predict_noise(&x, &vec![t; n])?.detach();
                    evals += 1;
                    x = ddim_update(schedule, &x, &eps, t, cfg.ddim_eta, cond.range, &mut streams, pad)?;
                }
                Move::Renoise(t) => x = renoise(schedule, &x, t, &mut streams)?,
            }
        }
        grids.extend(tensor_to_grids(&x, pad)?);
    }
    finish(grids, observed, mask, cfg, seed, evals)
}

#[allow(clippy::too_many_arguments)]
fn refine(
    model: &dyn Denoiser,
    schedule: &NoiseSchedule,
    cond: &Conditioning,
    mut x: Tensor,
    t: usize,
    cfg: &InpaintConfig,
    polish: usize,
    evals: &mut usize,
) -> Result<Tensor> {
    let n = x.dim(0)?;
    let ts = vec![t; n];
    let (a, b) = schedule.forward_coeffs(t);
    let lr = cfg.refine_step_size * a * a;
    // During the polish the step grows while the observed loss keeps falling
    // and halves (from the last accepted point) when it rises.
    let mut step = lr;
    let mut accepted: Option<(f64, Tensor, Tensor)> = None;
    for k in 0..cfg.refine_steps + polish {
        let var = Var::from_tensor(&x.detach())?;
        let eps = model.predict_noise(var.as_tensor(), &ts)?;
        *evals += 1;
        let x0 = ((var.as_tensor() - (eps * b)?)? / a)?;
        let resid = x0.broadcast_sub(&cond.observed)?;
        let loss = resid.broadcast_mul(&cond.mask)?.sqr()?.sum_all()?;
        if k >= cfg.refine_steps {
            let worst = scalar(&resid.broadcast_mul(&cond.data_mask)?.abs()?.max_all()?)?;
            // leave some room for the final DDIM step's round-off
            if worst <= 0.5 * cfg.fidelity_tolerance {
                return Ok(x.detach());
            }
            let l = scalar(&loss)?;
            if let Some((best, bx, bg)) = &accepted {
                if l > *best {
                    step *= 0.5;
                    x = (bx - (bg * step)?)?;
                    continue;
                }
                step *= 2.0;
            }
            let g = latent_grad(&loss, &var)?;
            x = (var.as_tensor().detach() - (&g * step)?)?;
            accepted = Some((l, var.as_tensor().detach(), g));
        } else {
            let g = latent_grad(&loss, &var)?;
            x = (var.as_tensor().detach() - (g * lr)?)?;
        }
        check_finite(&x, "latent refinement")?;
    }
    if let Some((_, bx, _)) = accepted {
        return Ok(bx);
    }
    Ok(x.detach())
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

fn latent_grad(loss: &Tensor, var: &Var) -> Result<Tensor> {
    let grads = loss.backward()?;
    Ok(grads
        .get(var.as_tensor())
        .ok_or_else(|| Error::numeric("latent received no gradient"))?
        .detach())
}

/// Dispatch on `cfg.algorithm`.
pub fn inpaint(
    model: &dyn Denoiser,
    schedule: &NoiseSchedule,
    observed: &ModelGrid,
    mask: &ObservationMask,
    cfg: &InpaintConfig,
    seed: u64,
) -> Result<ConditionalSampleResult> {
    match cfg.algorithm {
        Algorithm::Repaint => repaint_sample(model, schedule, observed, mask, cfg, seed),
        Algorithm::CopaintOddim => copaint_sample(model, schedule, observed, mask, cfg, seed),
    }
}
