//! Piecewise-linear growth trend with changepoints, fitted by ridge-penalised
//! least squares.
//!
//! `g(t) = (k + a(t)·delta) t + (m + a(t)·gamma)` with `a_j(t) = 1[t >= s_j]`
//! and `gamma_j = -s_j delta_j`, which keeps `g` continuous.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::ridge_solve;

use super::{check_horizon, Forecast};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendConfig {
    pub n_changepoints: usize,
    /// Fraction of the training span that may hold changepoints.
    pub changepoint_range: f64,
    /// L2 penalty on the rate adjustments, with time in days and values
    /// scaled by their maximum magnitude.
    pub ridge: f64,
}

impl Default for TrendConfig {
    fn default() -> Self {
        Self {
            n_changepoints: 14,
            changepoint_range: 0.8,
            ridge: 0.5,
        }
    }
}

impl TrendConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.changepoint_range > 0.0 && self.changepoint_range <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "changepoint_range {} outside (0,1]",
                self.changepoint_range
            )));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidArgument("ridge penalty must be >= 0".into()));
        }
        Ok(())
    }
}

/// Fitted trend in the original time (day index) and value units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendModel {
    k: f64,
    m: f64,
    changepoints: Vec<f64>,
    delta: Vec<f64>,
    gamma_adj: Vec<f64>,
    /// Number of training points; forecasts start at `t = n_train`.
    n_train: usize,
}

impl TrendModel {
    pub fn new(k: f64, m: f64, changepoints: Vec<f64>, delta: Vec<f64>, n_train: usize) -> Result<Self> {
        if changepoints.len() != delta.len() {
            return Err(Error::LengthMismatch {
                left: changepoints.len(),
                right: delta.len(),
            });
        }
        if changepoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("changepoints must be strictly increasing".into()));
        }
        let gamma_adj = changepoints.iter().zip(&delta).map(|(s, d)| -s * d).collect();
        Ok(Self {
            k,
            m,
            changepoints,
            delta,
            gamma_adj,
            n_train,
        })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn changepoints(&self) -> &[f64] {
        &self.changepoints
    }

    /// Rate adjustments in value units per day.
    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn gamma_adj(&self) -> &[f64] {
        &self.gamma_adj
    }

    /// Evaluates the trend at (possibly fractional) day index `t`.
    pub fn evaluate(&self, t: f64) -> f64 {
        let mut rate = self.k;
        let mut offset = self.m;
        for ((s, d), g) in self.changepoints.iter().zip(&self.delta).zip(&self.gamma_adj) {
            if t >= *s {
                rate += d;
                offset += g;
            }
        }
        rate * t + offset
    }
}

impl Forecast for TrendModel {
    fn predict(&self, horizon: usize) -> Result<Vec<f64>> {
        check_horizon(horizon)?;
        Ok((0..horizon)
            .map(|h| self.evaluate((self.n_train + h) as f64))
            .collect())
    }
}

/// Changepoint day indices: evenly spaced over the first `range` of the
/// history, excluding the first point.
pub fn changepoint_indices(n: usize, n_changepoints: usize, range: f64) -> Vec<usize> {
    if n_changepoints == 0 {
        return Vec::new();
    }
    let hist = ((n as f64 * range).floor() as usize).max(1);
    let step = (hist - 1) as f64 / n_changepoints as f64;
    let mut idx: Vec<usize> = (1..=n_changepoints)
        .map(|i| (i as f64 * step).round() as usize)
        .filter(|&i| i > 0)
        .collect();
    idx.dedup();
    idx
}

pub fn fit_prophet_trend(train: &[f64], config: &TrendConfig) -> Result<TrendModel> {
    config.validate()?;
    let n = train.len();
    if n <= config.n_changepoints + 2 {
        return Err(Error::TooShort {
            needed: config.n_changepoints + 3,
            got: n,
        });
    }
    if train.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite training value".into()));
    }
    let y_scale = train.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let y_scale = if y_scale > 0.0 { y_scale } else { 1.0 };

    let cps: Vec<f64> = changepoint_indices(n, config.n_changepoints, config.changepoint_range)
        .into_iter()
        .map(|i| i as f64)
        .collect();
    if train.iter().all(|v| *v == train[0]) {
        // zero residual and zero penalty: the exact optimum
        let zeros = vec![0.0; cps.len()];
        return TrendModel::new(0.0, train[0], cps, zeros, n);
    }
    let cols = 2 + cps.len();
    let mut design = Vec::with_capacity(n * cols);
    for t in 0..n {
        let t = t as f64;
        design.push(t);
        design.push(1.0);
        for s in &cps {
            design.push(if t >= *s { t - s } else { 0.0 });
        }
    }
    let y: Vec<f64> = train.iter().map(|v| v / y_scale).collect();
    let mut penalty = vec![config.ridge; cols];
    penalty[0] = 0.0;
    penalty[1] = 0.0;
    let beta = ridge_solve(&design, cols, &y, &penalty)
        .ok_or_else(|| Error::DegenerateRegression("trend normal equations are singular".into()))?;

    TrendModel::new(
        beta[0] * y_scale,
        beta[1] * y_scale,
        cps,
        beta[2..].iter().map(|d| d * y_scale).collect(),
        n,
    )
}
