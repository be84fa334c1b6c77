//! Monte Carlo summaries: proportions with Wilson intervals, means with
//! normal intervals, and batch-means standard errors for correlated series.

use serde::{Deserialize, Serialize};

use crate::error::{RdsError, Result};

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStat {
    pub label: String,
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl EnsembleStat {
    /// Proportion `successes / n` with a 95% Wilson score interval.
    pub fn proportion(label: impl Into<String>, successes: usize, n: usize) -> Self {
        assert!(n >= 1, "proportion needs at least one trial");
        assert!(successes <= n);
        let nf = n as f64;
        let p = successes as f64 / nf;
        let z2 = Z95 * Z95;
        let denom = 1.0 + z2 / nf;
        let centre = (p + z2 / (2.0 * nf)) / denom;
        let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
        // Clamp so the interval always contains the point estimate exactly,
        // including the p = 0 and p = 1 endpoints where rounding can bite.
        let ci_low = (centre - half).max(0.0).min(p);
        let ci_high = (centre + half).min(1.0).max(p);
        Self {
            label: label.into(),
            n,
            mean: p,
            stderr: (p * (1.0 - p) / nf).sqrt(),
            ci_low,
            ci_high,
        }
    }

    /// Mean with a given standard error and a normal 95% interval.
    pub fn from_mean(label: impl Into<String>, n: usize, mean: f64, stderr: f64) -> Self {
        assert!(n >= 1);
        Self {
            label: label.into(),
            n,
            mean,
            stderr,
            ci_low: mean - Z95 * stderr,
            ci_high: mean + Z95 * stderr,
        }
    }

    /// Mean of independent samples; stderr is `sd / sqrt(n)` (0 for n = 1).
    pub fn from_samples(label: impl Into<String>, samples: &[f64]) -> Self {
        let n = samples.len();
        assert!(n >= 1, "need at least one sample");
        let mean = mean(samples);
        let stderr = if n > 1 {
            (sample_variance(samples) / n as f64).sqrt()
        } else {
            0.0
        };
        Self::from_mean(label, n, mean, stderr)
    }

    pub fn successes(&self) -> usize {
        (self.mean * self.n as f64).round() as usize
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two samples.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Means of consecutive non-overlapping batches of `batch_len`; a trailing
/// partial batch is dropped.
pub fn batch_means(series: &[f64], batch_len: usize) -> Vec<f64> {
    series
        .chunks_exact(batch_len)
        .map(mean)
        .collect()
}

/// Time average of a correlated series with a batch-means standard error.
/// The point estimate uses the whole series.
pub fn batch_mean_stat(label: impl Into<String>, series: &[f64], batch_len: usize) -> Result<EnsembleStat> {
    if batch_len == 0 || series.len() < 2 * batch_len {
        return Err(RdsError::Length {
            len: series.len(),
            batch_len,
        });
    }
    let batches = batch_means(series, batch_len);
    let nb = batches.len() as f64;
    let stderr = (sample_variance(&batches) / nb).sqrt();
    Ok(EnsembleStat::from_mean(label, series.len(), mean(series), stderr))
}

/// Empirical quantile with linear interpolation between order statistics.
/// `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}
