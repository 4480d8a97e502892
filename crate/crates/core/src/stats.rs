//! Small statistical helpers shared across modules.

use crate::error::{Error, Result};

/// Empirical quantile of ascending `sorted` data by inverting the ECDF,
/// averaging the two adjacent order statistics when `n·level` is an integer.
///
/// For `n = 512` and `level = 0.5` this is the mean of the 256th and 257th
/// order statistics.
pub fn quantile_sorted(sorted: &[f64], level: f64) -> Result<f64> {
    let n = sorted.len();
    if n == 0 {
        return Err(Error::invalid("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::invalid(format!("quantile level {level} outside [0, 1]")));
    }
    let h = n as f64 * level;
    let k = h.round();
    if (h - k).abs() < 1e-9 {
        let k = k as usize;
        if k == 0 {
            return Ok(sorted[0]);
        }
        if k >= n {
            return Ok(sorted[n - 1]);
        }
        return Ok(0.5 * (sorted[k - 1] + sorted[k]));
    }
    let idx = (h.ceil() as usize).clamp(1, n);
    Ok(sorted[idx - 1])
}

pub fn quantile(values: &[f64], level: f64) -> Result<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, level)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Pearson correlation; `None` when either series has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= f64::EPSILON * ma.abs().max(1.0) || sbb <= f64::EPSILON * mb.abs().max(1.0) {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// Two-sided exact sign test: probability of a split at least as uneven as
/// `positive` vs `negative` under Binomial(n, 1/2).
pub fn sign_test_p(positive: usize, negative: usize) -> f64 {
    let n = positive + negative;
    if n == 0 {
        return 1.0;
    }
    let k = positive.min(negative);
    let mut log_p = -(n as f64) * std::f64::consts::LN_2;
    let mut tail = 0.0;
    for i in 0..=k {
        tail += log_p.exp();
        log_p += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    (2.0 * tail).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_1_to_512() {
        let v: Vec<f64> = (1..=512).map(|i| i as f64).collect();
        assert_eq!(quantile_sorted(&v, 0.5).unwrap(), 256.5);
        // 512 * 0.01 = 5.12 -> 6th order statistic
        assert_eq!(quantile_sorted(&v, 0.01).unwrap(), 6.0);
        assert_eq!(quantile_sorted(&v, 0.25).unwrap(), 128.5);
    }

    #[test]
    fn quantile_edges() {
        assert!(quantile_sorted(&[], 0.5).is_err());
        assert_eq!(quantile_sorted(&[3.0], 0.99).unwrap(), 3.0);
        assert_eq!(quantile_sorted(&[1.0, 2.0], 1.0).unwrap(), 2.0);
        assert_eq!(quantile_sorted(&[1.0, 2.0], 0.0).unwrap(), 1.0);
    }

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_none());
    }

    #[test]
    fn sign_test_values() {
        // all 10 of 10 in one direction: 2 / 1024
        assert!((sign_test_p(10, 0) - 2.0 / 1024.0).abs() < 1e-15);
        assert_eq!(sign_test_p(5, 5), 1.0);
        assert_eq!(sign_test_p(0, 0), 1.0);
    }
}
