//! Ensemble reductions and log-log rate fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-order pairwise summation: the result depends only on the order of
/// `values`, never on how the values were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    /// Standard error of the mean (0 for a single sample).
    pub stderr: f64,
    pub count: usize,
}

pub fn estimate_mean(samples: &[f64]) -> Result<MeanEstimate> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples to average".into()));
    }
    let n = samples.len() as f64;
    let mean = pairwise_sum(samples) / n;
    let stderr = if samples.len() > 1 {
        let dev: Vec<f64> = samples.iter().map(|x| (x - mean).powi(2)).collect();
        (pairwise_sum(&dev) / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(MeanEstimate {
        mean,
        stderr,
        count: samples.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least squares of `log y` against `log x`.
///
/// `r2` is 1 when `y` is constant (a perfect flat fit).
pub fn fit_rate(x: &[f64], y: &[f64]) -> Result<RateFit> {
    if x.len() != y.len() {
        return Err(Error::Fit(format!("{} x values but {} y values", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", x.len())));
    }
    if let Some(bad) = x.iter().chain(y).find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Fit(format!("log-log fit needs positive finite data, got {bad}")));
    }
    let increasing = x.windows(2).all(|w| w[1] > w[0]);
    let decreasing = x.windows(2).all(|w| w[1] < w[0]);
    if !increasing && !decreasing {
        return Err(Error::Fit("x must be strictly monotone".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = pairwise_sum(&lx) / n;
    let my = pairwise_sum(&ly) / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r2 = if syy <= 1e-300 { 1.0 } else { 1.0 - sse / syy };
    Ok(RateFit {
        slope,
        intercept,
        r2,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn fit_examples() {
        let x = [1.0f64, 2.0, 4.0, 8.0];
        let f = fit_rate(&x, &x).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(0.15)).collect();
        assert!((fit_rate(&x, &y).unwrap().slope - 0.15).abs() < 1e-12);
        let flat = fit_rate(&x, &[2.0; 4]).unwrap();
        assert!(flat.slope.abs() < 1e-12);
        let down = [8.0, 4.0, 2.0, 1.0];
        assert!((fit_rate(&down, &down).unwrap().slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_errors() {
        assert!(fit_rate(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(fit_rate(&[1.0, 2.0, 0.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(fit_rate(&[1.0, 2.0, 3.0], &[1.0, -2.0, 3.0]).is_err());
        assert!(fit_rate(&[1.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(fit_rate(&[1.0, 3.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn mean_and_stderr() {
        let e = estimate_mean(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((e.mean - 2.5).abs() < 1e-15);
        // sample variance 5/3
        assert!((e.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(estimate_mean(&[]).is_err());
    }

    proptest! {
        #[test]
        fn pairwise_sum_matches_naive(v in proptest::collection::vec(-1e3f64..1e3, 0..200)) {
            let naive: f64 = v.iter().sum();
            prop_assert!((pairwise_sum(&v) - naive).abs() <= 1e-9 * (1.0 + v.iter().map(|x| x.abs()).sum::<f64>()));
        }

        #[test]
        fn recovers_power_laws(p in -2.0f64..2.0, c in 0.1f64..10.0) {
            let x = [0.5f64, 0.25, 0.125, 0.0625];
            let y: Vec<f64> = x.iter().map(|v| c * v.powf(p)).collect();
            let f = fit_rate(&x, &y).unwrap();
            prop_assert!((f.slope - p).abs() < 1e-9);
            prop_assert!((f.intercept - c.ln()).abs() < 1e-9);
        }
    }
}
