//! Summary statistics of one channel series.

use crate::{Error, Result};

pub const NUM_STATS: usize = 14;
pub const HISTOGRAM_BINS: usize = 16;

pub const STAT_NAMES: [&str; NUM_STATS] = [
    "mode", "median", "q1", "q3", "mean", "max", "min", "range", "var", "std", "m3", "kurtosis", "skewness",
    "entropy",
];

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Counts of a `bins`-bin equal-width histogram over `[min, max]`.
pub fn histogram(values: &[f64], min: f64, max: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    let width = (max - min) / bins as f64;
    for &v in values {
        let b = if width > 0.0 { ((v - min) / width).floor() as usize } else { 0 };
        counts[b.min(bins - 1)] += 1;
    }
    counts
}

/// `[mode, median, Q1, Q3, mean, max, min, range, var, std, m3, kurtosis,
/// skewness, entropy]`. Variance is the population variance, kurtosis is
/// excess kurtosis, entropy is in nats over a 16-bin histogram.
pub fn stats_vector(values: &[f64]) -> Result<[f64; NUM_STATS]> {
    if values.len() < 2 {
        return Err(Error::invalid(format!("statistics need at least 2 values, got {}", values.len())));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite value {bad} in series")));
    }
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;

    let (mode, skew, kurt, entropy) = if max > min && m2 > 0.0 {
        let counts = histogram(values, min, max, HISTOGRAM_BINS);
        let (best, _) = counts
            .iter()
            .enumerate()
            .fold((0, 0), |acc, (i, &c)| if c > acc.1 { (i, c) } else { acc });
        let width = (max - min) / HISTOGRAM_BINS as f64;
        let entropy = counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum::<f64>();
        (
            min + (best as f64 + 0.5) * width,
            m3 / m2.powf(1.5),
            m4 / (m2 * m2) - 3.0,
            entropy,
        )
    } else {
        (min, 0.0, 0.0, 0.0)
    };

    Ok([
        mode,
        quantile_sorted(&sorted, 0.5),
        quantile_sorted(&sorted, 0.25),
        quantile_sorted(&sorted, 0.75),
        mean,
        max,
        min,
        max - min,
        m2,
        m2.sqrt(),
        m3,
        kurt,
        skew,
        entropy,
    ])
}

/// Pearson correlation of equal-length series; 0 when either is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid(format!(
            "pearson needs equal lengths >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Ok(0.0);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Resample onto `len` points spanning the same normalized time range.
pub fn resample_linear(values: &[f64], len: usize) -> Vec<f64> {
    if values.len() == len || values.is_empty() {
        return values.to_vec();
    }
    if values.len() == 1 || len == 1 {
        return vec![values[0]; len];
    }
    let scale = (values.len() - 1) as f64 / (len - 1) as f64;
    (0..len)
        .map(|i| {
            let pos = i as f64 * scale;
            let lo = (pos.floor() as usize).min(values.len() - 2);
            let t = pos - lo as f64;
            values[lo] * (1.0 - t) + values[lo + 1] * t
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::seq::SliceRandom;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn symmetric_triple() {
        let s = stats_vector(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s[4], 2.0);
        assert_eq!(s[1], 2.0);
        assert_eq!(s[7], 2.0);
        assert_abs_diff_eq!(s[8], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s[12], 0.0, epsilon = 1e-15);
        assert_eq!((s[2], s[3]), (1.5, 2.5));
    }

    #[test]
    fn constant_series() {
        let s = stats_vector(&[4.2; 7]).unwrap();
        assert_eq!(s[5], 4.2);
        assert_eq!(s[6], 4.2);
        assert_eq!(s[0], 4.2);
        assert_eq!(s[8], 0.0);
        assert_eq!(s[13], 0.0);
        assert_eq!((s[11], s[12]), (0.0, 0.0));
    }

    #[test]
    fn normal_sample_has_zero_excess_kurtosis() {
        let mut rng = crate::seed::rng(4);
        let x: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = stats_vector(&x).unwrap();
        assert!(s[11].abs() < 0.1, "kurtosis {}", s[11]);
        assert!(s[12].abs() < 0.05);
    }

    #[test]
    fn mode_and_entropy_of_known_histogram() {
        // Bins 0 and 15 hold the extremes, bin 5 holds three values.
        let x = [0.0, 16.0, 5.2, 5.5, 5.9];
        let s = stats_vector(&x).unwrap();
        assert_abs_diff_eq!(s[0], 5.5, epsilon = 1e-12);
        let p = [0.2f64, 0.2, 0.6];
        let h: f64 = p.iter().map(|p| -p * p.ln()).sum();
        assert_abs_diff_eq!(s[13], h, epsilon = 1e-12);
    }

    #[test]
    fn short_or_bad_series_rejected() {
        assert!(stats_vector(&[1.0]).is_err());
        assert!(stats_vector(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn pearson_examples() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() + i as f64 * 0.01).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_abs_diff_eq!(pearson(&x, &x).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pearson(&x, &neg).unwrap(), -1.0, epsilon = 1e-12);
        assert_eq!(pearson(&x, &[3.0; 50]).unwrap(), 0.0);
        assert!(pearson(&x, &x[..10]).is_err());

        let mut rng = crate::seed::rng(11);
        let big: Vec<f64> = (0..20_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut shuffled = big.clone();
        shuffled.shuffle(&mut rng);
        assert!(pearson(&big, &shuffled).unwrap().abs() < 0.05);
    }

    #[test]
    fn resample_keeps_endpoints_and_lines() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = resample_linear(&x, 7);
        assert_eq!(y.len(), 7);
        for (i, v) in y.iter().enumerate() {
            assert_abs_diff_eq!(*v, i as f64 * 0.5, epsilon = 1e-12);
        }
        assert_eq!(resample_linear(&x, 4), x.to_vec());
        assert_eq!(resample_linear(&[2.0], 3), vec![2.0; 3]);
    }
}
