//! Meta-features describing an input window: coefficient of variation,
//! SVD entropy, the KPSS trend-stationarity statistic and the lag-k ACF.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Meta-feature identifiers in their fixed report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Feature {
    Cv,
    Svde,
    Kpss,
    Acf,
}

impl Feature {
    pub const ALL: [Feature; 4] = [Feature::Cv, Feature::Svde, Feature::Kpss, Feature::Acf];

    pub fn label(self) -> &'static str {
        match self {
            Feature::Cv => "CV",
            Feature::Svde => "SVDE",
            Feature::Kpss => "KPSS",
            Feature::Acf => "ACF",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .into_iter()
            .find(|f| f.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown meta-feature {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaFeatureVector {
    pub cv: f64,
    pub svd_entropy: f64,
    pub kpss: f64,
    pub acf1: f64,
}

impl MetaFeatureVector {
    pub fn get(&self, feature: Feature) -> f64 {
        match feature {
            Feature::Cv => self.cv,
            Feature::Svde => self.svd_entropy,
            Feature::Kpss => self.kpss,
            Feature::Acf => self.acf1,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        Feature::ALL.map(|f| self.get(f))
    }
}

/// Embedding and lag settings for [`extract_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub svd_order: usize,
    pub svd_delay: usize,
    pub acf_lag: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            svd_order: 3,
            svd_delay: 1,
            acf_lag: 1,
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation over absolute mean. Zero for a flat series.
///
/// The absolute mean keeps the statistic nonnegative for windows that live in
/// a transformed space with negative values.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: values.len(),
        });
    }
    let mu = mean(values);
    let ss: f64 = values.iter().map(|v| (v - mu).powi(2)).sum();
    let sigma = (ss / (values.len() - 1) as f64).sqrt();
    if sigma == 0.0 {
        return Ok(0.0);
    }
    if mu == 0.0 {
        return Err(Error::ZeroMean);
    }
    Ok(sigma / mu.abs())
}

/// Shannon entropy (nats) of the sum-normalised singular values of the
/// delay-embedding trajectory matrix. An all-zero window scores 0.
pub fn svd_entropy(values: &[f64], order: usize, delay: usize) -> Result<f64> {
    if order < 1 || delay < 1 || values.len() < order * delay + 1 {
        return Err(Error::TooShortForEmbedding {
            len: values.len(),
            order,
            delay,
        });
    }
    let rows = values.len() - (order - 1) * delay;
    let trajectory = DMatrix::from_fn(rows, order, |r, c| values[r + c * delay]);
    let singular = trajectory.singular_values();
    let largest = singular.iter().copied().fold(0.0f64, f64::max);
    // singular values at round-off level count as zero (numerical rank)
    let cutoff = largest * 1e-12;
    let kept: Vec<f64> = singular.iter().copied().filter(|s| *s > cutoff).collect();
    let total: f64 = kept.iter().sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let h: f64 = kept
        .iter()
        .map(|s| s / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    Ok(h.max(0.0))
}

/// Newey-West bandwidth `floor(4 (T/100)^(1/4))`.
pub fn kpss_bandwidth(t: usize) -> usize {
    (4.0 * (t as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Long-run variance with Bartlett weights `1 - j/(lags+1)`.
pub fn newey_west_variance(residuals: &[f64], lags: usize) -> f64 {
    let n = residuals.len();
    let autocov = |j: usize| -> f64 {
        residuals[j..]
            .iter()
            .zip(residuals)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let mut s2 = autocov(0);
    for j in 1..=lags.min(n.saturating_sub(1)) {
        let w = 1.0 - j as f64 / (lags as f64 + 1.0);
        s2 += 2.0 * w * autocov(j);
    }
    s2
}

/// KPSS statistic for stationarity around a linear trend.
///
/// Returns 0 when the trend regression fits exactly (a straight line or a
/// constant), so flat epidemic windows never abort a run.
pub fn kpss_statistic(values: &[f64]) -> Result<f64> {
    let t_len = values.len();
    if t_len < 3 {
        return Err(Error::DegenerateRegression(format!(
            "need at least 3 points, got {t_len}"
        )));
    }
    if t_len < 10 {
        return Err(Error::TooShort {
            needed: 10,
            got: t_len,
        });
    }
    // OLS of x_t on (1, t)
    let n = t_len as f64;
    let t_mean = (n - 1.0) / 2.0;
    let x_mean = mean(values);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (t, x) in values.iter().enumerate() {
        let dt = t as f64 - t_mean;
        sxy += dt * (x - x_mean);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    let intercept = x_mean - slope * t_mean;
    let residuals: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(t, x)| x - intercept - slope * t as f64)
        .collect();

    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if residuals.iter().all(|e| e.abs() <= 1e-9 * scale) {
        return Ok(0.0);
    }

    let mut partial = 0.0;
    let mut sum_sq = 0.0;
    for e in &residuals {
        partial += e;
        sum_sq += partial * partial;
    }
    let s2 = newey_west_variance(&residuals, kpss_bandwidth(t_len));
    if !(s2 > 0.0) {
        return Ok(0.0);
    }
    Ok((sum_sq / (n * n) / s2).max(0.0))
}

/// Sample autocorrelation at `lag` using the full-sample mean. A flat series
/// has no defined ACF; 0 is returned.
pub fn acf(values: &[f64], lag: usize) -> Result<f64> {
    if lag >= values.len() {
        return Err(Error::InvalidArgument(format!(
            "lag {lag} must be smaller than the series length {}",
            values.len()
        )));
    }
    let m = mean(values);
    let denom: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    if denom == 0.0 {
        return Ok(0.0);
    }
    let num: f64 = values[..values.len() - lag]
        .iter()
        .zip(&values[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum();
    Ok((num / denom).clamp(-1.0, 1.0))
}

pub fn extract(values: &[f64]) -> Result<MetaFeatureVector> {
    extract_with(values, &FeatureConfig::default())
}

pub fn extract_with(values: &[f64], config: &FeatureConfig) -> Result<MetaFeatureVector> {
    if values.len() < 10 {
        return Err(Error::TooShort {
            needed: 10,
            got: values.len(),
        });
    }
    Ok(MetaFeatureVector {
        cv: coefficient_of_variation(values)?,
        svd_entropy: svd_entropy(values, config.svd_order, config.svd_delay)?,
        kpss: kpss_statistic(values)?,
        acf1: acf(values, config.acf_lag)?,
    })
}
