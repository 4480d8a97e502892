//! Print the linear and cosine variance schedules at a few lengths: where the
//! signal fraction ᾱ_t crosses 1/2 and how little is left at t = T.

use epidiff::diffusion::{NoiseSchedule, ScheduleKind};

fn main() -> epidiff::Result<()> {
    for kind in [ScheduleKind::Linear, ScheduleKind::Cosine] {
        for steps in [50, 200, 500] {
            let s = NoiseSchedule::new(kind, steps)?;
            let half = s.alpha_bars().iter().position(|&a| a < 0.5).map_or(steps, |i| i + 1);
            println!(
                "{kind:?} T={steps:<4} beta_1 {:.2e}  beta_T {:.3}  alpha_bar < 1/2 from t={half:<4} alpha_bar_T {:.2e}",
                s.beta(1),
                s.beta(steps),
                s.alpha_bar(steps)
            );
        }
    }
    Ok(())
}
