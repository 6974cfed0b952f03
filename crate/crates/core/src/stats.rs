//! Sample moments and the Shapiro–Wilk normality statistic.
//!
//! The Shapiro–Wilk coefficients follow Royston's approximation (algorithm
//! AS R94): the two extreme weights come from fitted polynomials in
//! `1/sqrt(n)`, the rest from scaled normal order-statistic scores.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::special::normal_quantile;

pub const SW_MIN: usize = 3;
pub const SW_MAX: usize = 5000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0)
}

pub fn moments(values: &[f64]) -> Result<Moments> {
    if values.is_empty() {
        return Err(Error::DegenerateInput("no values".into()));
    }
    let n = values.len() as f64;
    let m = mean(values);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    Ok(Moments { mean: m, std: m2.sqrt(), skewness, excess_kurtosis })
}

/// Affine map to zero mean and unit population standard deviation.
pub fn standardize(values: &[f64]) -> Result<Vec<f64>> {
    let mo = moments(values)?;
    if mo.std == 0.0 || !mo.std.is_finite() {
        return Err(Error::DegenerateInput("constant sample cannot be standardized".into()));
    }
    Ok(values.iter().map(|v| (v - mo.mean) / mo.std).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub w: f64,
    /// Number of values the statistic was computed on.
    pub n: usize,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Royston's coefficients for the upper half of the order statistics.
fn coefficients(n: usize) -> Vec<f64> {
    const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
    const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
    let half = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let an25 = n as f64 + 0.25;
    let m: Vec<f64> = (1..=half).map(|i| normal_quantile((i as f64 - 0.375) / an25)).collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / (n as f64).sqrt();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;
    let mut a = vec![0.0; half];
    a[0] = a1;
    let (first, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        a[1] = a2;
        let num = summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1];
        let den = 1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2;
        (2, (num / den).sqrt())
    } else {
        (1, ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt())
    };
    for i in first..half {
        a[i] = -m[i] / fac;
    }
    a
}

/// Shapiro–Wilk `W` for `3 <= n <= 5000` non-constant values.
pub fn shapiro_wilk(samples: &[f64]) -> Result<NormalityReport> {
    let n = samples.len();
    if !(SW_MIN..=SW_MAX).contains(&n) {
        return Err(Error::SampleSize { n, min: SW_MIN, max: SW_MAX });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite value".into()));
    }
    let mo = moments(samples)?;
    let ssq: f64 = samples.iter().map(|v| (v - mo.mean).powi(2)).sum();
    if mo.std == 0.0 || ssq <= 0.0 {
        return Err(Error::DegenerateInput("constant sample".into()));
    }
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let a = coefficients(n);
    let numerator: f64 = a.iter().enumerate().map(|(i, ai)| ai * (x[n - 1 - i] - x[i])).sum();
    let w = (numerator * numerator / ssq).min(1.0);
    Ok(NormalityReport { w, n, skewness: mo.skewness, excess_kurtosis: mo.excess_kurtosis })
}

/// [`shapiro_wilk`] on at most [`SW_MAX`] values; larger samples are reduced
/// to a seeded subsample of exactly that size.
pub fn shapiro_wilk_subsampled(samples: &[f64], seed: u64) -> Result<NormalityReport> {
    if samples.len() <= SW_MAX {
        return shapiro_wilk(samples);
    }
    let mut rng = substream(seed, "shapiro-wilk", samples.len() as u64);
    let mut idx = sample(&mut rng, samples.len(), SW_MAX).into_vec();
    idx.sort_unstable();
    let sub: Vec<f64> = idx.into_iter().map(|i| samples[i]).collect();
    shapiro_wilk(&sub)
}
