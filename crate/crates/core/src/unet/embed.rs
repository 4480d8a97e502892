use crate::error::{Error, Result};

/// Sinusoidal timestep embedding with interleaved `sin`/`cos` pairs at
/// geometrically spaced frequencies `10000^(−i/(dim/2))`.
pub fn sinusoidal_embed(t: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::invalid(format!("embedding dimension {dim} must be even and positive")));
    }
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        let arg = t as f64 * freq;
        out.push(arg.sin());
        out.push(arg.cos());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_step() {
        let e = sinusoidal_embed(0, 16).unwrap();
        for pair in e.chunks(2) {
            assert_eq!(pair[0], 0.0);
            assert_eq!(pair[1], 1.0);
        }
    }

    #[test]
    fn odd_dim_rejected() {
        assert!(sinusoidal_embed(3, 7).is_err());
        assert!(sinusoidal_embed(3, 0).is_err());
    }

    #[test]
    fn bounded_and_distinct() {
        let embs: Vec<Vec<f64>> = (1..=500).map(|t| sinusoidal_embed(t, 32).unwrap()).collect();
        assert!(embs.iter().flatten().all(|v| v.abs() <= 1.0));
        let mut min_dist = f64::INFINITY;
        for i in 0..embs.len() {
            for j in i + 1..embs.len() {
                let d: f64 = embs[i]
                    .iter()
                    .zip(&embs[j])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                min_dist = min_dist.min(d);
            }
        }
        assert!(min_dist > 0.0, "min pairwise distance {min_dist}");
    }
}
