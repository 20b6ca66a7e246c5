//! Nonseasonal ARIMA fitted by conditional sum of squares.
//!
//! The differencing order comes from a sequence of augmented Dickey-Fuller
//! tests; the AR and MA orders and the optional constant are then chosen by
//! AIC over a bounded grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

use crate::optim::{least_squares, nelder_mead, SimplexOptions};

use super::{check_horizon, Forecast};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub const MAX_P: usize = 5;
    pub const MAX_D: usize = 2;
    pub const MAX_Q: usize = 5;

    pub fn new(p: usize, d: usize, q: usize) -> Result<Self> {
        if p > Self::MAX_P || d > Self::MAX_D || q > Self::MAX_Q {
            return Err(Error::InvalidArgument(format!(
                "ARIMA order ({p},{d},{q}) outside p<=5, d<=2, q<=5"
            )));
        }
        Ok(Self { p, d, q })
    }
}

/// Search bounds for [`fit_arima`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaConfig {
    pub max_p: usize,
    pub max_d: usize,
    pub max_q: usize,
}

impl Default for ArimaConfig {
    fn default() -> Self {
        Self {
            max_p: ArimaOrder::MAX_P,
            max_d: ArimaOrder::MAX_D,
            max_q: ArimaOrder::MAX_Q,
        }
    }
}

impl ArimaConfig {
    pub fn validate(&self) -> Result<()> {
        ArimaOrder::new(self.max_p, self.max_d, self.max_q).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    order: ArimaOrder,
    /// Mean (d = 0) or drift (d = 1) of the differenced series, if fitted.
    constant: Option<f64>,
    ar: Vec<f64>,
    ma: Vec<f64>,
    sse: f64,
    n_residuals: usize,
    aic: f64,
    /// Last value of each differencing level 0..d, used to integrate forecasts.
    level_tails: Vec<f64>,
    /// Tail of the differenced series (at least p values).
    w_tail: Vec<f64>,
    /// Tail of the residuals (at least q values).
    e_tail: Vec<f64>,
}

impl ArimaModel {
    pub fn order(&self) -> ArimaOrder {
        self.order
    }

    pub fn has_constant(&self) -> bool {
        self.constant.is_some()
    }

    pub fn constant(&self) -> Option<f64> {
        self.constant
    }

    pub fn ar(&self) -> &[f64] {
        &self.ar
    }

    pub fn ma(&self) -> &[f64] {
        &self.ma
    }

    pub fn sse(&self) -> f64 {
        self.sse
    }

    pub fn aic(&self) -> f64 {
        self.aic
    }
}

impl Forecast for ArimaModel {
    fn predict(&self, horizon: usize) -> Result<Vec<f64>> {
        check_horizon(horizon)?;
        let mu = self.constant.unwrap_or(0.0);
        let mut w = self.w_tail.clone();
        let mut e = self.e_tail.clone();
        let mut diffs = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let mut next = mu;
            for (i, phi) in self.ar.iter().enumerate() {
                next += phi * (w[w.len() - 1 - i] - mu);
            }
            for (j, theta) in self.ma.iter().enumerate() {
                next += theta * e[e.len() - 1 - j];
            }
            w.push(next);
            e.push(0.0);
            diffs.push(next);
        }
        // integrate back through each differencing level
        let mut out = diffs;
        for level in (0..self.order.d).rev() {
            let mut last = self.level_tails[level];
            for v in out.iter_mut() {
                last += *v;
                *v = last;
            }
        }
        Ok(out)
    }
}

pub fn difference(values: &[f64], d: usize) -> Vec<f64> {
    let mut w = values.to_vec();
    for _ in 0..d {
        w = w.windows(2).map(|p| p[1] - p[0]).collect();
    }
    w
}

/// True when every root of `1 - c_1 z - ... - c_k z^k` lies outside the unit
/// circle, checked by the step-down (reverse Levinson) recursion.
pub fn is_stationary(coefs: &[f64]) -> bool {
    let mut a: Vec<f64> = coefs.to_vec();
    while let Some(&last) = a.last() {
        if last == 0.0 {
            a.pop();
        } else {
            break;
        }
    }
    for k in (1..=a.len()).rev() {
        let r = a[k - 1];
        if !r.is_finite() || r.abs() >= 1.0 - 1e-8 {
            return false;
        }
        let denom = 1.0 - r * r;
        let prev: Vec<f64> = (0..k - 1).map(|j| (a[j] + r * a[k - 2 - j]) / denom).collect();
        a = prev;
    }
    true
}

/// MA invertibility: `1 + t_1 z + ... + t_q z^q` has no roots inside the unit circle.
pub fn is_invertible(ma: &[f64]) -> bool {
    let neg: Vec<f64> = ma.iter().map(|t| -t).collect();
    is_stationary(&neg)
}

/// Conditional-sum-of-squares residuals with zero pre-sample residuals.
/// Residuals are produced for `t >= p`.
fn css_residuals(w: &[f64], mu: f64, ar: &[f64], ma: &[f64]) -> Vec<f64> {
    let p = ar.len();
    let mut e = vec![0.0; w.len()];
    for t in p..w.len() {
        let mut pred = mu;
        for (i, phi) in ar.iter().enumerate() {
            pred += phi * (w[t - 1 - i] - mu);
        }
        for (j, theta) in ma.iter().enumerate() {
            if t > j {
                pred += theta * e[t - 1 - j];
            }
        }
        e[t] = w[t] - pred;
    }
    e
}

fn css(w: &[f64], mu: f64, ar: &[f64], ma: &[f64]) -> f64 {
    css_residuals(w, mu, ar, ma)[ar.len()..]
        .iter()
        .map(|e| e * e)
        .sum()
}

/// Hannan-Rissanen starting values: a long AR regression supplies residual
/// estimates, then the ARMA regression is solved by least squares.
fn hannan_rissanen(w: &[f64], mu: f64, p: usize, q: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    if p == 0 && q == 0 {
        return Some((Vec::new(), Vec::new()));
    }
    let z: Vec<f64> = w.iter().map(|v| v - mu).collect();
    let n = z.len();
    let mut resid = vec![0.0; n];
    if q > 0 {
        let m = (p.max(q) + 2).min(n / 3).max(1);
        let rows: Vec<usize> = (m..n).collect();
        if rows.len() <= m {
            return None;
        }
        let mut x = Vec::with_capacity(rows.len() * m);
        for &t in &rows {
            x.extend((1..=m).map(|i| z[t - i]));
        }
        let y: Vec<f64> = rows.iter().map(|&t| z[t]).collect();
        let phi = least_squares(&x, m, &y)?;
        for &t in &rows {
            let pred: f64 = (1..=m).map(|i| phi[i - 1] * z[t - i]).sum();
            resid[t] = z[t] - pred;
        }
    }
    let start = p.max(q) + if q > 0 { (p.max(q) + 2).min(n / 3).max(1) } else { 0 };
    let rows: Vec<usize> = (start..n).collect();
    let k = p + q;
    if rows.len() <= k {
        return None;
    }
    let mut x = Vec::with_capacity(rows.len() * k);
    for &t in &rows {
        x.extend((1..=p).map(|i| z[t - i]));
        x.extend((1..=q).map(|j| resid[t - j]));
    }
    let y: Vec<f64> = rows.iter().map(|&t| z[t]).collect();
    let beta = least_squares(&x, k, &y)?;
    Some((beta[..p].to_vec(), beta[p..].to_vec()))
}

fn viable(ar: &[f64], ma: &[f64]) -> bool {
    is_stationary(ar) && is_invertible(ma)
}

/// Fits one ARIMA order; `None` if the candidate is not viable.
pub fn fit_order(values: &[f64], order: ArimaOrder, with_constant: bool) -> Option<ArimaModel> {
    let ArimaOrder { p, d, q } = order;
    let w = difference(values, d);
    let n_res = w.len().checked_sub(p)?;
    let k = p + q + usize::from(with_constant);
    if n_res < k + 2 {
        return None;
    }
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let mu0 = if with_constant { mean } else { 0.0 };

    let (mut ar0, mut ma0) = hannan_rissanen(&w, mu0, p, q).unwrap_or((vec![0.0; p], vec![0.0; q]));
    if !viable(&ar0, &ma0) {
        ar0 = vec![0.0; p];
        ma0 = vec![0.0; q];
    }

    let pack = |mu: f64, ar: &[f64], ma: &[f64]| -> Vec<f64> {
        let mut x = Vec::with_capacity(k);
        if with_constant {
            x.push(mu);
        }
        x.extend_from_slice(ar);
        x.extend_from_slice(ma);
        x
    };
    let unpack = |x: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
        let off = usize::from(with_constant);
        let mu = if with_constant { x[0] } else { 0.0 };
        (mu, x[off..off + p].to_vec(), x[off + p..off + p + q].to_vec())
    };

    let start = pack(mu0, &ar0, &ma0);
    let (mu, ar, ma) = if k == 0 {
        (0.0, Vec::new(), Vec::new())
    } else {
        let opts = SimplexOptions {
            initial_step: 0.1,
            max_evaluations: 300 * k,
            f_tolerance: 1e-10,
            x_tolerance: 1e-7,
        };
        let objective = |x: &[f64]| {
            let (mu, ar, ma) = unpack(x);
            if !viable(&ar, &ma) {
                return f64::INFINITY;
            }
            css(&w, mu, &ar, &ma)
        };
        let best = nelder_mead(objective, &start, &opts);
        if !best.value.is_finite() {
            return None;
        }
        unpack(&best.x)
    };
    if !viable(&ar, &ma) {
        return None;
    }

    let resid = css_residuals(&w, mu, &ar, &ma);
    let sse: f64 = resid[p..].iter().map(|e| e * e).sum();
    if !sse.is_finite() {
        return None;
    }
    let n = n_res as f64;
    let aic = 2.0 * k as f64 + n * (sse.max(f64::MIN_POSITIVE) / n).ln();

    let mut level_tails = Vec::with_capacity(d);
    let mut level = values.to_vec();
    for _ in 0..d {
        level_tails.push(*level.last()?);
        level = difference(&level, 1);
    }
    let tail = p.max(q).max(1);
    Some(ArimaModel {
        order,
        constant: with_constant.then_some(mu),
        ar,
        ma,
        sse,
        n_residuals: n_res,
        aic,
        level_tails,
        w_tail: w[w.len().saturating_sub(tail)..].to_vec(),
        e_tail: resid[resid.len().saturating_sub(tail)..].to_vec(),
    })
}

/// Augmented Dickey-Fuller t-statistic for the regression
/// `dy_t = a + b y_{t-1} + sum_i c_i dy_{t-i} + e_t`. `None` when the
/// regression is degenerate (perfect fit or too few rows).
pub fn adf_statistic(values: &[f64], lags: usize) -> Option<f64> {
    let dy = difference(values, 1);
    let rows: Vec<usize> = (lags..dy.len()).collect();
    let cols = 2 + lags;
    if rows.len() <= cols + 1 {
        return None;
    }
    let mut x = Vec::with_capacity(rows.len() * cols);
    for &t in &rows {
        x.push(1.0);
        x.push(values[t]);
        x.extend((1..=lags).map(|i| dy[t - i]));
    }
    let y: Vec<f64> = rows.iter().map(|&t| dy[t]).collect();
    let design = DMatrix::from_row_slice(rows.len(), cols, &x);
    let gram_inv = (design.transpose() * &design).try_inverse()?;
    let beta = &gram_inv * design.transpose() * DVector::from_column_slice(&y);
    let resid = DVector::from_column_slice(&y) - &design * &beta;
    let sigma2 = resid.norm_squared() / (rows.len() - cols) as f64;
    let se = (sigma2 * gram_inv[(1, 1)]).sqrt();
    let tau = beta[1] / se;
    tau.is_finite().then_some(tau)
}

/// 5% critical value of the constant-only Dickey-Fuller test for `n`
/// regression rows (MacKinnon response surface).
pub fn adf_critical_value(n: usize) -> f64 {
    let n = n as f64;
    -2.86154 - 2.8903 / n - 4.234 / (n * n)
}

/// Smallest `d <= max_d` at which the differenced series is flat or the ADF
/// test rejects a unit root at 5%. Lag order `trunc((n-1)^(1/3))`.
pub fn select_differencing(values: &[f64], max_d: usize) -> usize {
    for d in 0..max_d {
        let w = difference(values, d);
        let scale = w.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if w.iter().all(|v| (v - w[0]).abs() <= 1e-12 * scale) {
            return d;
        }
        let lags = ((w.len() as f64 - 1.0).cbrt()).trunc() as usize;
        let n_rows = w.len().saturating_sub(1 + lags);
        if let Some(tau) = adf_statistic(&w, lags) {
            if tau < adf_critical_value(n_rows) {
                return d;
            }
        }
    }
    max_d
}

/// Chooses `d` by [`select_differencing`], then searches `p`, `q` and the
/// optional constant (mean for d = 0, drift for d = 1) for the lowest AIC.
/// Ties keep the earlier, simpler candidate. If nothing is viable the random
/// walk `(0,1,0)` is used.
pub fn fit_arima(train: &[f64], config: &ArimaConfig) -> Result<ArimaModel> {
    config.validate()?;
    if train.len() < 20 {
        return Err(Error::TooShort {
            needed: 20,
            got: train.len(),
        });
    }
    if train.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite training value".into()));
    }
    let d = select_differencing(train, config.max_d);
    let constants: &[bool] = if d < 2 { &[false, true] } else { &[false] };
    let mut best: Option<ArimaModel> = None;
    for p in 0..=config.max_p {
        for q in 0..=config.max_q {
            let order = ArimaOrder { p, d, q };
            for &with_constant in constants {
                if let Some(model) = fit_order(train, order, with_constant) {
                    if best.as_ref().map_or(true, |b| model.aic < b.aic) {
                        best = Some(model);
                    }
                }
            }
        }
    }
    match best {
        Some(m) => Ok(m),
        None => {
            log::warn!("no viable ARIMA candidate; falling back to (0,1,0)");
            fit_order(train, ArimaOrder { p: 0, d: 1, q: 0 }, false).ok_or(Error::NoViableModel)
        }
    }
}
