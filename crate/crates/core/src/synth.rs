//! Synthetic cumulative curves for tests and desk-scale runs.
//!
//! Every kind starts from a noiseless curve `c(t)`. Noise perturbs the daily
//! increments multiplicatively, negative increments are clipped to zero and
//! the result is re-accumulated, so outputs are always valid cumulative
//! counts.

use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Shortest curve that can be split for a 7-day horizon.
pub const MIN_LENGTH: usize = 67;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    /// `K / (1 + exp(-r (t - t0)))`
    Logistic,
    /// `K exp(-exp(-r (t - t0)))`
    Gompertz,
    /// Slope `growth_rate` up to `inflection`, `late_rate` afterwards.
    PiecewiseLinear,
    /// Drift `growth_rate` per day; noise makes the steps random.
    RandomWalk,
    /// Flat at `capacity`.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    #[default]
    Train,
    Holdout,
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 1).expect("valid date")
}

fn default_capacity() -> f64 {
    10_000.0
}

fn default_growth_rate() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub region: String,
    #[serde(default)]
    pub role: Role,
    pub kind: CurveKind,
    pub length: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_capacity")]
    pub capacity: f64,
    #[serde(default = "default_growth_rate")]
    pub growth_rate: f64,
    #[serde(default)]
    pub inflection: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub late_rate: Option<f64>,
    /// Relative standard deviation of the daily increments.
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "default_start")]
    pub start: NaiveDate,
}

impl CurveSpec {
    pub fn logistic(region: impl Into<String>, length: usize, capacity: f64, growth_rate: f64, inflection: f64) -> Self {
        Self {
            region: region.into(),
            role: Role::Train,
            kind: CurveKind::Logistic,
            length,
            seed: 0,
            capacity,
            growth_rate,
            inflection,
            late_rate: None,
            noise: 0.0,
            start: default_start(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidSpec(format!("{}: {msg}", self.region)));
        if self.region.trim().is_empty() {
            return fail("empty region id".into());
        }
        if self.length < MIN_LENGTH {
            return fail(format!("length {} below {MIN_LENGTH}", self.length));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return fail(format!("noise {} must be finite and >= 0", self.noise));
        }
        if !(self.capacity >= 0.0 && self.capacity.is_finite()) || !self.inflection.is_finite() {
            return fail("capacity must be finite and >= 0".into());
        }
        let rate_ok = match self.kind {
            CurveKind::Logistic | CurveKind::Gompertz => self.growth_rate > 0.0 && self.capacity > 0.0,
            _ => self.growth_rate >= 0.0,
        };
        if !rate_ok || !self.growth_rate.is_finite() {
            return fail(format!("growth rate {} invalid for {:?}", self.growth_rate, self.kind));
        }
        if let Some(r) = self.late_rate {
            if !(r >= 0.0 && r.is_finite()) {
                return fail(format!("late rate {r} must be >= 0"));
            }
        }
        Ok(())
    }

    /// Noiseless curve value at day `t`.
    pub fn curve(&self, t: f64) -> f64 {
        let (k, r, t0) = (self.capacity, self.growth_rate, self.inflection);
        match self.kind {
            CurveKind::Logistic => k / (1.0 + (-r * (t - t0)).exp()),
            CurveKind::Gompertz => k * (-(-r * (t - t0)).exp()).exp(),
            CurveKind::PiecewiseLinear => {
                let late = self.late_rate.unwrap_or(r / 4.0);
                r * t.min(t0).max(0.0) + late * (t - t0).max(0.0) + if t0 < 0.0 { -late * t0 } else { 0.0 }
            }
            CurveKind::RandomWalk => r * t,
            CurveKind::Constant => k,
        }
    }
}

pub fn generate(spec: &CurveSpec) -> Result<TimeSeries> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = Vec::with_capacity(spec.length);
    let mut prev_clean = spec.curve(0.0);
    let mut level = prev_clean.max(0.0);
    values.push(level);
    for t in 1..spec.length {
        let clean = spec.curve(t as f64);
        let inc = clean - prev_clean;
        prev_clean = clean;
        let z: f64 = rng.sample(StandardNormal);
        let noisy = (inc * (1.0 + spec.noise * z)).max(0.0);
        level = (level + noisy).max(level);
        values.push(level);
    }
    TimeSeries::new(spec.region.clone(), spec.start, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveFile {
    #[serde(rename = "curve")]
    pub curves: Vec<CurveSpec>,
}

impl CurveFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::UnreadableFile {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: CurveFile = toml::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        let mut seen = std::collections::BTreeSet::new();
        for c in &file.curves {
            c.validate()?;
            if !seen.insert(c.region.as_str()) {
                return Err(Error::InvalidSpec(format!("duplicate region {}", c.region)));
            }
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    pub fn regions(&self, role: Role) -> Vec<String> {
        self.curves
            .iter()
            .filter(|c| c.role == role)
            .map(|c| c.region.clone())
            .collect()
    }
}

/// Logistic family with mixed capacity, rate and inflection and seeded
/// increment noise: `n_train` training curves then `n_holdout` holdout curves.
pub fn logistic_family(n_train: usize, n_holdout: usize, length: usize, seed: u64) -> CurveFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let curves = (0..n_train + n_holdout)
        .map(|i| {
            let holdout = i >= n_train;
            let (role, prefix, n) = if holdout {
                (Role::Holdout, "holdout", i - n_train)
            } else {
                (Role::Train, "train", i)
            };
            let capacity = 10f64.powf(rng.gen_range(3.0..6.0)).round();
            let growth_rate = (rng.gen_range(0.04..0.2f64) * 1000.0).round() / 1000.0;
            let inflection = rng.gen_range(30.0..length as f64 + 20.0).round();
            let noise = (rng.gen_range(0.05..0.3f64) * 100.0).round() / 100.0;
            CurveSpec {
                region: format!("{prefix}-{n:02}"),
                role,
                seed: seed.wrapping_mul(1000).wrapping_add(i as u64),
                noise,
                ..CurveSpec::logistic("", length, capacity, growth_rate, inflection)
            }
        })
        .collect();
    CurveFile { curves }
}
