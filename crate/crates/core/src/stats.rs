//! Goodness-of-fit tests and summary statistics used by the validation
//! suites.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Pearson chi-square test of observed counts against cell probabilities.
pub fn chi_square(counts: &[u64], probs: &[f64]) -> Result<TestResult> {
    if counts.len() != probs.len() || counts.len() < 2 {
        return Err(Error::OutOfRange("chi-square needs matching counts and probabilities, at least two cells".into()));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::OutOfRange("chi-square needs at least one observation".into()));
    }
    let mut stat = 0.0;
    for (&c, &p) in counts.iter().zip(probs) {
        if !(p > 0.0) {
            return Err(Error::OutOfRange("cell probabilities must be positive".into()));
        }
        let e = total as f64 * p;
        stat += (c as f64 - e).powi(2) / e;
    }
    let dist = ChiSquared::new((counts.len() - 1) as f64).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(TestResult { statistic: stat, p_value: dist.sf(stat) })
}

pub fn chi_square_uniform(counts: &[u64]) -> Result<TestResult> {
    chi_square(counts, &vec![1.0 / counts.len() as f64; counts.len()])
}

/// Kolmogorov survival function `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.3 {
        // The alternating series converges slowly here; the value is 1 to
        // double precision.
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = (-2.0 * j * j * x * x).exp();
        sum += if j as u64 % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF, with
/// Stephens' small-sample correction.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestResult> {
    if samples.is_empty() {
        return Err(Error::OutOfRange("KS test needs samples".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sn = n.sqrt();
    Ok(TestResult { statistic: d, p_value: kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d) })
}

/// Mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Effective sample size by Geyer's initial positive sequence estimator.
/// A constant series has ESS equal to its length.
pub fn ess(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return n as f64;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0 = centred.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if !(c0 > 1e-300 * mean.abs().max(1.0)) {
        return n as f64;
    }
    let rho =
        |lag: usize| centred[..n - lag].iter().zip(&centred[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64 / c0;
    let mut tau = -1.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let gamma = rho(2 * m) + rho(2 * m + 1);
        if gamma <= 0.0 {
            break;
        }
        tau += 2.0 * gamma;
        m += 1;
    }
    (n as f64 / tau.max(1.0 / n as f64)).min(n as f64)
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn chi_square_known_value() {
        // (10-15)^2/15 + (20-15)^2/15 = 10/3 on 1 df.
        let r = chi_square_uniform(&[10, 20]).unwrap();
        assert!((r.statistic - 10.0 / 3.0).abs() < 1e-12);
        assert!((r.p_value - 0.067_889).abs() < 1e-5);
    }

    #[test]
    fn kolmogorov_reference_points() {
        assert!((kolmogorov_sf(1.0) - 0.269_999_67).abs() < 1e-8);
        assert!((kolmogorov_sf(1.358_1) - 0.05).abs() < 1e-4);
    }

    #[test]
    fn ks_accepts_uniform_rejects_shifted() {
        let mut rng = crate::seed::rng_from(&[1]);
        let xs: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        assert!(ks_test(&xs, |x| x.clamp(0.0, 1.0)).unwrap().p_value > 0.001);
        let shifted: Vec<f64> = xs.iter().map(|x| x * 0.9).collect();
        assert!(ks_test(&shifted, |x| x.clamp(0.0, 1.0)).unwrap().p_value < 1e-6);
    }

    #[test]
    fn ess_extremes() {
        assert_eq!(ess(&[3.0; 50]), 50.0);
        let mut rng = crate::seed::rng_from(&[2]);
        let iid: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        let e = ess(&iid);
        assert!(e > 3000.0, "{e}");
        // AR(1) with phi = 0.9 has ESS about n (1 - phi) / (1 + phi).
        let mut x = 0.0;
        let ar: Vec<f64> = (0..20000)
            .map(|_| {
                x = 0.9 * x + rng.random::<f64>() - 0.5;
                x
            })
            .collect();
        let e = ess(&ar);
        assert!(e > 600.0 && e < 1600.0, "{e}");
    }

    #[test]
    fn quantiles() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5), 2.0);
        assert_eq!(quantile(&[0.0, 1.0], 0.25), 0.25);
    }
}
