//! Empirical CDFs, Kolmogorov-Smirnov tests and normal-approximation intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub distance: f64,
    pub critical_value: f64,
    pub n1: usize,
    pub n2: usize,
    pub reject: bool,
}

/// Asymptotic KS constant `c(alpha) = sqrt(-ln(alpha / 2) / 2)`.
pub fn ks_coefficient(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

pub fn two_sample_critical_value(alpha: f64, n1: usize, n2: usize) -> f64 {
    let (n1, n2) = (n1 as f64, n2 as f64);
    ks_coefficient(alpha) * ((n1 + n2) / (n1 * n2)).sqrt()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("alpha {alpha} must lie in (0, 1)")))
    }
}

fn sorted(sample: &[f64]) -> Result<Vec<f64>> {
    if sample.iter().any(|x| x.is_nan()) {
        return Err(invalid("sample contains NaN"));
    }
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Sup distance between the two empirical CDFs. Ties are handled by stepping over every
/// copy of a value in both samples before comparing.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

pub fn two_sample_ks(a: &[f64], b: &[f64], alpha: f64) -> Result<KsReport> {
    check_alpha(alpha)?;
    let distance = ks_distance(a, b)?;
    let critical_value = two_sample_critical_value(alpha, a.len(), b.len());
    Ok(KsReport {
        distance,
        critical_value,
        n1: a.len(),
        n2: b.len(),
        reject: distance > critical_value,
    })
}

/// One-sample KS against a continuous CDF; `n2` is reported as 0.
pub fn one_sample_ks(sample: &[f64], cdf: impl Fn(f64) -> f64, alpha: f64) -> Result<KsReport> {
    check_alpha(alpha)?;
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let s = sorted(sample)?;
    let n = s.len() as f64;
    let distance = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let critical_value = ks_coefficient(alpha) / n.sqrt();
    Ok(KsReport {
        distance,
        critical_value,
        n1: s.len(),
        n2: 0,
        reject: distance > critical_value,
    })
}

/// Right-continuous empirical CDF of `sample` at each grid value (`grid` sorted).
pub fn empirical_cdf(sample: &[f64], grid: &[f64]) -> Vec<f64> {
    if grid.is_empty() {
        return Vec::new();
    }
    debug_assert!(grid.windows(2).all(|w| w[0] <= w[1]));
    if sample.is_empty() {
        return vec![0.0; grid.len()];
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    grid.iter()
        .map(|&g| s.partition_point(|&x| x <= g) as f64 / n)
        .collect()
}

/// Two-sided normal quantile for a central interval of probability `level`.
pub fn normal_z(level: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(0.5 + level / 2.0)
}

/// Sample mean and standard error `sd / sqrt(n)`.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Pearson correlation.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}
