//! Double exponential smoothing (Holt's linear trend method).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{nelder_mead, SimplexOptions};

use super::{check_horizon, Forecast};

/// Bounds the smoothing constants are clamped into while fitting.
pub const MIN_SMOOTHING: f64 = 0.001;
pub const MAX_SMOOTHING: f64 = 0.999;

/// Smoothing constants and the final level/trend state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HwParams {
    pub alpha: f64,
    pub gamma: f64,
    pub level: f64,
    pub trend: f64,
}

impl HwParams {
    pub fn new(alpha: f64, gamma: f64, level: f64, trend: f64) -> Result<Self> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(alpha) || !open(gamma) {
            return Err(Error::InvalidArgument(format!(
                "smoothing constants must lie in (0,1): alpha={alpha}, gamma={gamma}"
            )));
        }
        Ok(Self {
            alpha,
            gamma,
            level,
            trend,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoltModel {
    params: HwParams,
    sse: f64,
}

impl HoltModel {
    pub fn params(&self) -> &HwParams {
        &self.params
    }

    pub fn sse(&self) -> f64 {
        self.sse
    }
}

impl Forecast for HoltModel {
    fn predict(&self, horizon: usize) -> Result<Vec<f64>> {
        check_horizon(horizon)?;
        let HwParams { level, trend, .. } = self.params;
        Ok((1..=horizon).map(|h| level + h as f64 * trend).collect())
    }
}

/// Runs the smoothing recursion with `S_1 = y_1`, `b_1 = y_2 - y_1` and
/// returns `(level, trend, one-step SSE)`. Constants in `[0, 1]` are accepted
/// so the degenerate `alpha = gamma = 1` case can be evaluated directly.
pub fn smooth(values: &[f64], alpha: f64, gamma: f64) -> Result<(f64, f64, f64)> {
    if values.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: values.len(),
        });
    }
    if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "smoothing constants outside [0,1]: alpha={alpha}, gamma={gamma}"
        )));
    }
    let mut level = values[0];
    let mut trend = values[1] - values[0];
    let mut sse = 0.0;
    for &y in &values[1..] {
        let forecast = level + trend;
        sse += (y - forecast).powi(2);
        let prev = level;
        level = alpha * y + (1.0 - alpha) * (level + trend);
        trend = gamma * (level - prev) + (1.0 - gamma) * trend;
    }
    Ok((level, trend, sse))
}

fn clamp_smoothing(v: f64) -> f64 {
    v.clamp(MIN_SMOOTHING, MAX_SMOOTHING)
}

/// Chooses `(alpha, gamma)` by minimising the in-sample one-step SSE with
/// Nelder-Mead started from each point of {0.1, 0.5, 0.9}^2.
pub fn fit_hw(train: &[f64]) -> Result<HoltModel> {
    if train.len() < 5 {
        return Err(Error::TooShort {
            needed: 5,
            got: train.len(),
        });
    }
    if train.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite training value".into()));
    }
    let objective = |x: &[f64]| {
        smooth(train, clamp_smoothing(x[0]), clamp_smoothing(x[1]))
            .map(|(_, _, sse)| sse)
            .unwrap_or(f64::INFINITY)
    };
    let opts = SimplexOptions {
        initial_step: 0.2,
        max_evaluations: 400,
        f_tolerance: 1e-12,
        x_tolerance: 1e-6,
    };
    let grid = [0.1, 0.5, 0.9];
    let mut best: Option<(f64, f64, f64)> = None;
    for a in grid {
        for g in grid {
            let m = nelder_mead(objective, &[a, g], &opts);
            let (alpha, gamma) = (clamp_smoothing(m.x[0]), clamp_smoothing(m.x[1]));
            if best.map_or(true, |(_, _, v)| m.value < v) {
                best = Some((alpha, gamma, m.value));
            }
        }
    }
    let (alpha, gamma, _) = best.expect("grid is non-empty");
    let (level, trend, sse) = smooth(train, alpha, gamma)?;
    Ok(HoltModel {
        params: HwParams::new(alpha, gamma, level, trend)?,
        sse,
    })
}
