use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offset of the squared-cosine ᾱ profile.
const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "l" => Ok(ScheduleKind::Linear),
            "cosine" | "c" => Ok(ScheduleKind::Cosine),
            other => Err(Error::invalid(format!("unknown schedule '{other}'"))),
        }
    }
}

/// Variance schedule β₁..β_T with cumulative products and posterior
/// variances. Step indices are 1-based; `alpha_bar(0) == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    kind: Option<ScheduleKind>,
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
    posterior_var: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(kind: ScheduleKind, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("a schedule needs at least one step"));
        }
        let beta = match kind {
            ScheduleKind::Linear => {
                // DDPM defaults (1e-4 .. 0.02 at T = 1000), rescaled for T.
                let scale = 1000.0 / steps as f64;
                let (lo, hi) = (scale * 1e-4, scale * 0.02);
                (0..steps)
                    .map(|i| {
                        let frac = if steps == 1 { 1.0 } else { i as f64 / (steps - 1) as f64 };
                        (lo + (hi - lo) * frac).min(MAX_BETA)
                    })
                    .collect()
            }
            ScheduleKind::Cosine => {
                let f = |t: usize| {
                    let x = (t as f64 / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET);
                    (x * std::f64::consts::FRAC_PI_2).cos().powi(2)
                };
                (1..=steps)
                    .map(|t| (1.0 - f(t) / f(t - 1)).clamp(0.0, MAX_BETA))
                    .collect()
            }
        };
        let mut s = Self::from_betas(beta)?;
        s.kind = Some(kind);
        Ok(s)
    }

    /// Build a schedule from explicit betas. Each β must lie in (0, 1) and the
    /// final ᾱ_T must be below 1e-3.
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::invalid("a schedule needs at least one step"));
        }
        if let Some((i, b)) = beta.iter().enumerate().find(|(_, &b)| !(b > 0.0 && b < 1.0)) {
            return Err(Error::invalid(format!("beta_{} = {b} outside (0, 1)", i + 1)));
        }
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut acc = 1.0;
        for &b in &beta {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        let last = *alpha_bar.last().unwrap();
        if last >= 1e-3 {
            return Err(Error::invalid(format!(
                "schedule leaves too much signal: alpha_bar_T = {last:.3e}"
            )));
        }
        let posterior_var = (0..beta.len())
            .map(|i| {
                if i == 0 {
                    0.0
                } else {
                    (1.0 - alpha_bar[i - 1]) / (1.0 - alpha_bar[i]) * beta[i]
                }
            })
            .collect();
        Ok(Self {
            kind: None,
            beta,
            alpha_bar,
            posterior_var,
        })
    }

    pub fn kind(&self) -> Option<ScheduleKind> {
        self.kind
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn posterior_variances(&self) -> &[f64] {
        &self.posterior_var
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            Err(Error::invalid(format!(
                "step {t} outside [1, {}]",
                self.steps()
            )))
        } else {
            Ok(())
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn posterior_var(&self, t: usize) -> f64 {
        self.posterior_var[t - 1]
    }

    /// `(√ᾱ_t, √(1−ᾱ_t))`, the forward-marginal coefficients.
    pub fn forward_coeffs(&self, t: usize) -> (f64, f64) {
        let ab = self.alpha_bar(t);
        (ab.sqrt(), (1.0 - ab).sqrt())
    }

    /// Reverse-step coefficients `(c_x, c_eps, σ_t)` with
    /// `x_{t−1} = c_x·x_t − c_eps·ε̂ + σ_t·z`. σ₁ is exactly zero.
    pub fn reverse_coeffs(&self, t: usize) -> (f64, f64, f64) {
        let b = self.beta(t);
        let c_x = 1.0 / (1.0 - b).sqrt();
        let c_eps = c_x * b / (1.0 - self.alpha_bar(t)).sqrt();
        let sigma = if t == 1 { 0.0 } else { self.posterior_var(t).sqrt() };
        (c_x, c_eps, sigma)
    }

    /// Posterior-mean coefficients `(c₀, c_t)` with
    /// `μ = c₀·x̂₀ + c_t·x_t`, using `ᾱ₀ = 1`. Substituting
    /// `x̂₀ = (x_t − √(1−ᾱ_t)·ε̂)/√ᾱ_t` recovers [`reverse_coeffs`](Self::reverse_coeffs).
    pub fn posterior_mean_coeffs(&self, t: usize) -> (f64, f64) {
        let b = self.beta(t);
        let ab = self.alpha_bar(t);
        let ab_prev = if t == 1 { 1.0 } else { self.alpha_bar(t - 1) };
        (
            ab_prev.sqrt() * b / (1.0 - ab),
            (1.0 - b).sqrt() * (1.0 - ab_prev) / (1.0 - ab),
        )
    }

    /// DDIM coefficients for a jump `t → s` (`s < t`):
    /// `x_s = c_x·x_t + c_eps·ε̂ + σ·z`.
    pub fn ddim_coeffs(&self, t: usize, s: usize, eta: f64) -> (f64, f64, f64) {
        let ab_t = self.alpha_bar(t);
        let ab_s = self.alpha_bar(s);
        let sigma = eta * ((1.0 - ab_s) / (1.0 - ab_t)).sqrt() * (1.0 - ab_t / ab_s).max(0.0).sqrt();
        let dir = (1.0 - ab_s - sigma * sigma).max(0.0).sqrt();
        // x̂₀ = (x_t − √(1−ᾱ_t) ε̂)/√ᾱ_t
        let c_x = (ab_s / ab_t).sqrt();
        let c_eps = dir - c_x * (1.0 - ab_t).sqrt();
        (c_x, c_eps, sigma)
    }
}
