//! Daily time-series container, Box-Cox transform, trailing moving average
//! and the A/B/C window splitter.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length of the A and B windows in days.
pub const WINDOW_LEN: usize = 30;

/// A dated, daily-spaced series for one region.
///
/// Dates are stored implicitly as `start + i` days so the one-day spacing
/// invariant cannot be violated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    region_id: String,
    start: NaiveDate,
    values: Vec<f64>,
    transformed: bool,
}

impl TimeSeries {
    /// Raw (untransformed) series. Values must be finite and nonnegative.
    pub fn new(region_id: impl Into<String>, start: NaiveDate, values: Vec<f64>) -> Result<Self> {
        Self::build(region_id.into(), start, values, false)
    }

    /// Series living in a transformed space; any finite value is allowed.
    pub fn new_transformed(
        region_id: impl Into<String>,
        start: NaiveDate,
        values: Vec<f64>,
    ) -> Result<Self> {
        Self::build(region_id.into(), start, values, true)
    }

    /// Builds a raw series from explicit dates, rejecting gaps.
    pub fn from_dates(
        region_id: impl Into<String>,
        dates: &[NaiveDate],
        values: Vec<f64>,
    ) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: dates.len(),
                right: values.len(),
            });
        }
        let start = *dates
            .first()
            .ok_or_else(|| Error::InvalidSeries("empty series".into()))?;
        for (i, pair) in dates.windows(2).enumerate() {
            if pair[1] - pair[0] != Duration::days(1) {
                return Err(Error::InvalidSeries(format!(
                    "dates not daily-spaced between index {i} ({}) and {} ({})",
                    pair[0],
                    i + 1,
                    pair[1]
                )));
            }
        }
        Self::new(region_id, start, values)
    }

    fn build(region_id: String, start: NaiveDate, values: Vec<f64>, transformed: bool) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSeries("empty series".into()));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidSeries(format!("non-finite value at index {i}")));
            }
            if !transformed && *v < 0.0 {
                return Err(Error::InvalidSeries(format!("negative count {v} at index {i}")));
            }
        }
        Ok(Self {
            region_id,
            start,
            values,
            transformed,
        })
    }

    pub fn region_id(&self) -> &str {
        &self.region_id
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        self.date(self.values.len() - 1)
    }

    pub fn date(&self, index: usize) -> NaiveDate {
        self.start + Duration::days(index as i64)
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.values.len()).map(|i| self.date(i))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_transformed(&self) -> bool {
        self.transformed
    }

    /// Sub-series `[offset, offset + len)`, keeping the transformed flag.
    pub fn slice(&self, offset: usize, len: usize) -> Result<Self> {
        if len == 0 || offset + len > self.values.len() {
            return Err(Error::InvalidArgument(format!(
                "slice [{offset}, {}) out of range for length {}",
                offset + len,
                self.values.len()
            )));
        }
        Ok(Self {
            region_id: self.region_id.clone(),
            start: self.date(offset),
            values: self.values[offset..offset + len].to_vec(),
            transformed: self.transformed,
        })
    }

    /// Same dates and region, new values in transformed space.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::build(self.region_id.clone(), self.start, values, true)
    }

    /// Keeps only the values up to and including `end`.
    pub fn truncate_to(&self, end: NaiveDate) -> Result<Self> {
        let days = (end - self.start).num_days();
        if days < 0 {
            return Err(Error::InvalidArgument(format!(
                "{end} precedes the start of {} ({})",
                self.region_id, self.start
            )));
        }
        let len = (days as usize + 1).min(self.values.len());
        self.slice(0, len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxCoxParams {
    pub lambda: f64,
    pub shift: f64,
}

impl BoxCoxParams {
    pub fn new(lambda: f64, shift: f64) -> Result<Self> {
        if !lambda.is_finite() || !shift.is_finite() || shift < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "invalid Box-Cox parameters lambda={lambda}, shift={shift}"
            )));
        }
        Ok(Self { lambda, shift })
    }

    pub fn identity() -> Self {
        Self {
            lambda: 1.0,
            shift: 0.0,
        }
    }

    pub fn forward(&self, y: f64) -> f64 {
        let x = y + self.shift;
        if self.lambda == 0.0 {
            x.ln()
        } else {
            (x.powf(self.lambda) - 1.0) / self.lambda
        }
    }

    /// Inverse transform; `None` outside the domain (`lambda * y + 1 <= 0`).
    pub fn inverse(&self, y: f64) -> Option<f64> {
        if self.lambda == 0.0 {
            Some(y.exp() - self.shift)
        } else {
            let arg = self.lambda * y + 1.0;
            (arg > 0.0).then(|| arg.powf(1.0 / self.lambda) - self.shift)
        }
    }

    /// Inverse that clamps out-of-domain points to the lower edge of the
    /// original range. Only used for reporting forecasts in original units.
    pub fn inverse_clamped(&self, y: f64) -> f64 {
        match self.inverse(y) {
            Some(v) if v.is_finite() => v,
            Some(_) => f64::MAX,
            None => -self.shift,
        }
    }
}

pub fn box_cox(series: &TimeSeries, params: &BoxCoxParams) -> Result<TimeSeries> {
    let mut out = Vec::with_capacity(series.len());
    for (index, &y) in series.values().iter().enumerate() {
        if y + params.shift <= 0.0 {
            return Err(Error::NonPositiveInput { index, value: y });
        }
        out.push(params.forward(y));
    }
    series.with_values(out)
}

pub fn box_cox_inverse(series: &TimeSeries, params: &BoxCoxParams) -> Result<TimeSeries> {
    if !series.is_transformed() {
        return Err(Error::InvalidArgument(
            "inverse Box-Cox applied to an untransformed series".into(),
        ));
    }
    let mut out = Vec::with_capacity(series.len());
    for (index, &y) in series.values().iter().enumerate() {
        match params.inverse(y) {
            Some(v) => out.push(v),
            None => {
                return Err(Error::DomainError {
                    index,
                    arg: params.lambda * y + 1.0,
                })
            }
        }
    }
    series.with_values(out)
}

/// Profile log-likelihood of the Box-Cox model at `lambda` for strictly
/// positive data. Returns `None` when the transformed data have zero variance.
pub fn box_cox_log_likelihood(values: &[f64], lambda: f64) -> Option<f64> {
    let n = values.len() as f64;
    let params = BoxCoxParams { lambda, shift: 0.0 };
    let transformed: Vec<f64> = values.iter().map(|&y| params.forward(y)).collect();
    let mean = transformed.iter().sum::<f64>() / n;
    let var = transformed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) || !var.is_finite() {
        return None;
    }
    let log_sum: f64 = values.iter().map(|y| y.ln()).sum();
    Some(-0.5 * n * var.ln() + (lambda - 1.0) * log_sum)
}

/// Grid points searched by [`estimate_lambda`]: -1.00, -0.99, ..., 2.00.
pub fn lambda_grid() -> impl Iterator<Item = f64> {
    (-100..=200).map(|i| i as f64 / 100.0)
}

/// Maximum-likelihood lambda over [`lambda_grid`]. A series with zero
/// variance gets the identity transform.
pub fn estimate_lambda(series: &TimeSeries) -> Result<BoxCoxParams> {
    if series.len() < 10 {
        return Err(Error::TooShort {
            needed: 10,
            got: series.len(),
        });
    }
    let min = series.values().iter().copied().fold(f64::INFINITY, f64::min);
    let shift = if min <= 0.0 { 1.0 - min } else { 0.0 };
    let shifted: Vec<f64> = series.values().iter().map(|y| y + shift).collect();
    if shifted.iter().all(|v| *v == shifted[0]) {
        return BoxCoxParams::new(1.0, shift);
    }

    let mut best: Option<(f64, f64)> = None;
    for lambda in lambda_grid() {
        if let Some(ll) = box_cox_log_likelihood(&shifted, lambda) {
            if best.map_or(true, |(_, b)| ll > b) {
                best = Some((lambda, ll));
            }
        }
    }
    let lambda = best.map_or(1.0, |(l, _)| l);
    BoxCoxParams::new(lambda, shift)
}

/// Trailing moving average: output `i` averages inputs `i..i + window` and is
/// dated at input `i + window - 1`.
pub fn moving_average(series: &TimeSeries, window: usize) -> Result<TimeSeries> {
    if window == 0 {
        return Err(Error::InvalidArgument("moving-average window must be >= 1".into()));
    }
    if window > series.len() {
        return Err(Error::WindowTooLarge {
            window,
            len: series.len(),
        });
    }
    let values = series
        .values()
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect();
    let shifted = TimeSeries {
        region_id: series.region_id.clone(),
        start: series.date(window - 1),
        values,
        transformed: series.transformed,
    };
    Ok(shifted)
}

/// One A/B/C window triple.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSet {
    pub window_a: TimeSeries,
    pub window_b: TimeSeries,
    pub window_c: TimeSeries,
    pub horizon: usize,
}

impl SplitSet {
    /// A, B and C concatenated back into one contiguous series.
    pub fn joined(&self) -> TimeSeries {
        let mut values = self.window_a.values().to_vec();
        values.extend_from_slice(self.window_b.values());
        values.extend_from_slice(self.window_c.values());
        TimeSeries {
            region_id: self.window_a.region_id.clone(),
            start: self.window_a.start,
            values,
            transformed: self.window_a.transformed,
        }
    }
}

pub fn check_horizon(horizon: usize) -> Result<()> {
    match horizon {
        7 | 14 => Ok(()),
        other => Err(Error::InvalidHorizon(other)),
    }
}

/// Number of triples [`split`] yields.
pub fn split_count(len: usize, horizon: usize, stride: usize) -> usize {
    let needed = 2 * WINDOW_LEN + horizon;
    if len < needed || stride == 0 {
        0
    } else {
        (len - needed) / stride + 1
    }
}

/// Sliding (A=30, B=30, C=horizon) decomposition advancing by `stride` days.
pub fn split(series: &TimeSeries, horizon: usize, stride: usize) -> Result<Vec<SplitSet>> {
    check_horizon(horizon)?;
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be >= 1".into()));
    }
    let needed = 2 * WINDOW_LEN + horizon;
    if series.len() < needed {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            horizon,
            needed,
        });
    }
    (0..split_count(series.len(), horizon, stride))
        .map(|k| {
            let offset = k * stride;
            Ok(SplitSet {
                window_a: series.slice(offset, WINDOW_LEN)?,
                window_b: series.slice(offset + WINDOW_LEN, WINDOW_LEN)?,
                window_c: series.slice(offset + 2 * WINDOW_LEN, horizon)?,
                horizon,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn day0() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 3, 1).unwrap()
    }

    fn raw(values: &[f64]) -> TimeSeries {
        TimeSeries::new("X", day0(), values.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn rejects_gaps_and_negative_counts() {
        let d = day0();
        let dates = [d, d + Duration::days(2)];
        assert!(TimeSeries::from_dates("X", &dates, vec![1.0, 2.0]).is_err());
        assert!(TimeSeries::new("X", d, vec![-1.0]).is_err());
        assert!(TimeSeries::new_transformed("X", d, vec![-1.0]).is_ok());
        assert!(TimeSeries::new("X", d, vec![]).is_err());
        assert!(TimeSeries::new("X", d, vec![f64::NAN]).is_err());
    }

    #[test]
    fn box_cox_examples() {
        let id = BoxCoxParams::new(1.0, 0.0).unwrap();
        let out = box_cox(&raw(&[1.0, 2.0, 3.0]), &id).unwrap();
        assert!(close(out.values(), &[0.0, 1.0, 2.0], 1e-15));
        assert!(out.is_transformed());

        let log = BoxCoxParams::new(0.0, 0.0).unwrap();
        let e = std::f64::consts::E;
        let out = box_cox(&raw(&[1.0, e, e * e]), &log).unwrap();
        assert!(close(out.values(), &[0.0, 1.0, 2.0], 1e-15));

        let half = BoxCoxParams::new(0.5, 0.0).unwrap();
        let out = box_cox(&raw(&[4.0]), &half).unwrap();
        assert_eq!(out.values(), &[2.0]);
    }

    #[test]
    fn box_cox_rejects_nonpositive() {
        let p = BoxCoxParams::new(0.5, 0.0).unwrap();
        let err = box_cox(&raw(&[1.0, 0.0]), &p).unwrap_err();
        assert!(matches!(err, Error::NonPositiveInput { index: 1, .. }));
    }

    #[test]
    fn box_cox_inverse_examples() {
        let p = BoxCoxParams::new(0.3, 0.0).unwrap();
        let x = raw(&[1.0, 10.0, 100.0]);
        let back = box_cox_inverse(&box_cox(&x, &p).unwrap(), &p).unwrap();
        assert!(close(back.values(), x.values(), 1e-12 * 100.0));

        let log = BoxCoxParams::new(0.0, 0.0).unwrap();
        let t = TimeSeries::new_transformed("X", day0(), vec![0.0, 1.0]).unwrap();
        let back = box_cox_inverse(&t, &log).unwrap();
        assert!(close(back.values(), &[1.0, std::f64::consts::E], 1e-15));

        let shifted = BoxCoxParams::new(1.0, 5.0).unwrap();
        let t = TimeSeries::new_transformed("X", day0(), vec![0.0]).unwrap();
        assert_eq!(box_cox_inverse(&t, &shifted).unwrap().values(), &[-4.0]);
    }

    #[test]
    fn box_cox_inverse_domain_error() {
        let p = BoxCoxParams::new(0.5, 0.0).unwrap();
        let t = TimeSeries::new_transformed("X", day0(), vec![1.0, -3.0]).unwrap();
        assert!(matches!(
            box_cox_inverse(&t, &p),
            Err(Error::DomainError { index: 1, .. })
        ));
        assert!(box_cox_inverse(&raw(&[1.0]), &p).is_err());
    }

    /// Independent brute-force maximiser of the Box-Cox profile likelihood,
    /// written without reference to the production helpers.
    fn brute_force_lambda(values: &[f64]) -> f64 {
        let n = values.len() as f64;
        let log_sum: f64 = values.iter().map(|y| y.ln()).sum();
        let mut best = (f64::NAN, f64::NEG_INFINITY);
        for i in -100..=200 {
            let lambda = i as f64 * 0.01;
            let z: Vec<f64> = values
                .iter()
                .map(|&y| {
                    if i == 0 {
                        y.ln()
                    } else {
                        (y.powf(lambda) - 1.0) / lambda
                    }
                })
                .collect();
            let m = z.iter().sum::<f64>() / n;
            let v = z.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            let ll = -n / 2.0 * v.ln() + (lambda - 1.0) * log_sum;
            if ll > best.1 {
                best = (lambda, ll);
            }
        }
        best.0
    }

    #[test]
    fn estimate_lambda_exponential_series() {
        let values: Vec<f64> = (0..40).map(|t| (t as f64 * 0.2).exp()).collect();
        let p = estimate_lambda(&raw(&values)).unwrap();
        let oracle = brute_force_lambda(&values);
        assert!((p.lambda - oracle).abs() < 1e-9, "{} vs {}", p.lambda, oracle);
        assert!(p.lambda.abs() <= 0.1, "lambda {}", p.lambda);
        assert_eq!(p.shift, 0.0);
    }

    #[test]
    fn estimate_lambda_linear_series() {
        // Evenly spaced values are light-tailed, so the likelihood peaks
        // below 1 (about 0.74, matching scipy.stats.boxcox_llf on a grid).
        let values: Vec<f64> = (0..40).map(|t| 10.0 + 3.0 * t as f64).collect();
        let p = estimate_lambda(&raw(&values)).unwrap();
        let oracle = brute_force_lambda(&values);
        assert!((p.lambda - oracle).abs() < 1e-9, "{} vs {}", p.lambda, oracle);
        assert!((0.7..=0.8).contains(&p.lambda), "lambda {}", p.lambda);
    }

    #[test]
    fn estimate_lambda_shift_and_errors() {
        let mut values: Vec<f64> = (0..12).map(|t| t as f64).collect();
        values[0] = 0.0;
        assert_eq!(estimate_lambda(&raw(&values)).unwrap().shift, 1.0);
        assert!(matches!(
            estimate_lambda(&raw(&[1.0; 9])),
            Err(Error::TooShort { .. })
        ));
        // flat input has no likelihood maximum; identity transform
        assert_eq!(estimate_lambda(&raw(&[3.0; 12])).unwrap().lambda, 1.0);
    }

    #[test]
    fn moving_average_examples() {
        let s = raw(&[1.0, 3.0, 5.0]);
        assert_eq!(moving_average(&s, 1).unwrap().values(), s.values());
        let m = moving_average(&s, 2).unwrap();
        assert_eq!(m.values(), &[2.0, 4.0]);
        assert_eq!(m.start(), day0() + Duration::days(1));
        assert_eq!(
            moving_average(&raw(&[0.0, 0.0, 10.0]), 2).unwrap().values(),
            &[0.0, 5.0]
        );
        assert!(matches!(
            moving_average(&s, 4),
            Err(Error::WindowTooLarge { .. })
        ));
    }

    #[test]
    fn split_counts() {
        let s = raw(&vec![1.0; 67]);
        assert_eq!(split(&s, 7, 7).unwrap().len(), 1);
        let s = raw(&vec![1.0; 74]);
        let sets = split(&s, 7, 7).unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[1].window_a.start(), day0() + Duration::days(7));
        for len in 60..200 {
            for stride in 1..15 {
                let expected = if len < 67 { 0 } else { (len - 67) / stride + 1 };
                assert_eq!(split_count(len, 7, stride), expected);
            }
        }
        assert!(matches!(
            split(&raw(&vec![1.0; 66]), 7, 7),
            Err(Error::SeriesTooShort { .. })
        ));
        assert!(matches!(split(&s, 10, 7), Err(Error::InvalidHorizon(10))));
    }

    #[test]
    fn twenty_nine_regions_of_nine_windows() {
        // 9 windows at stride 7 for horizon 7 need 67 + 8 * 7 days.
        let s = raw(&vec![1.0; 67 + 8 * 7]);
        let total: usize = (0..29).map(|_| split(&s, 7, 7).unwrap().len()).sum();
        assert_eq!(total, 261);
    }

    proptest! {
        #[test]
        fn box_cox_round_trip(
            values in prop::collection::vec(1e-3f64..1e6, 1..40),
            lambda in -1.0f64..2.0,
            shift in 0.0f64..10.0,
        ) {
            let p = BoxCoxParams::new(lambda, shift).unwrap();
            let s = raw(&values);
            let back = box_cox_inverse(&box_cox(&s, &p).unwrap(), &p).unwrap();
            for (a, b) in back.values().iter().zip(&values) {
                prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-3), "{} vs {}", a, b);
            }
        }

        #[test]
        fn moving_average_shift_equivariant(
            values in prop::collection::vec(0.0f64..1e4, 2..50),
            c in 0.0f64..1e3,
            window in 1usize..5,
        ) {
            prop_assume!(window <= values.len());
            let shifted: Vec<f64> = values.iter().map(|v| v + c).collect();
            let a = moving_average(&raw(&values), window).unwrap();
            let b = moving_average(&raw(&shifted), window).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x + c - y).abs() <= 1e-9 * (1.0 + y.abs()));
            }
        }

        #[test]
        fn moving_average_preserves_monotonicity(
            increments in prop::collection::vec(0.0f64..100.0, 2..60),
            window in 1usize..5,
        ) {
            prop_assume!(window <= increments.len());
            let cumulative: Vec<f64> = increments.iter().scan(0.0, |acc, x| { *acc += x; Some(*acc) }).collect();
            let m = moving_average(&raw(&cumulative), window).unwrap();
            prop_assert!(m.values().windows(2).all(|w| w[1] >= w[0]));
        }

        #[test]
        fn split_windows_tile(len in 67usize..200, stride in 1usize..20, h in prop::sample::select(vec![7usize, 14])) {
            prop_assume!(len >= 60 + h);
            let values: Vec<f64> = (0..len).map(|i| i as f64).collect();
            let s = raw(&values);
            let sets = split(&s, h, stride).unwrap();
            prop_assert_eq!(sets.len(), split_count(len, h, stride));
            for set in &sets {
                prop_assert_eq!(set.window_a.len(), WINDOW_LEN);
                prop_assert_eq!(set.window_b.len(), WINDOW_LEN);
                prop_assert_eq!(set.window_c.len(), h);
                prop_assert_eq!(set.window_b.start(), set.window_a.end() + Duration::days(1));
                prop_assert_eq!(set.window_c.start(), set.window_b.end() + Duration::days(1));
                prop_assert!(set.window_c.end() <= s.end());
                let joined = set.joined();
                let offset = (set.window_a.start() - s.start()).num_days() as usize;
                prop_assert_eq!(joined.values(), &values[offset..offset + 60 + h]);
            }
        }
    }
}
