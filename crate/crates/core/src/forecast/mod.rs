//! The four base forecasters behind a common fit/predict interface.

pub mod arima;
pub mod holt;
pub mod lstm;
pub mod trend;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use arima::{ArimaConfig, ArimaModel, ArimaOrder};
pub use holt::{HoltModel, HwParams};
pub use lstm::{LstmConfig, LstmForecaster, LstmNetwork};
pub use trend::{TrendConfig, TrendModel};

/// Base model identifiers. The declaration order is the selection tie-break
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Arima,
    Hw,
    Prophet,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Arima, ModelKind::Hw, ModelKind::Prophet, ModelKind::Lstm];

    /// Short label used in correlation tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Arima => "ARIMA",
            ModelKind::Hw => "HW",
            ModelKind::Prophet => "Prophet",
            ModelKind::Lstm => "LSTM",
        }
    }

    /// Long label used in the leaderboard.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Arima => "ARIMA",
            ModelKind::Hw => "Holt-Winters",
            ModelKind::Prophet => "Prophet",
            ModelKind::Lstm => "LSTM",
        }
    }

    pub fn is_stochastic(self) -> bool {
        self == ModelKind::Lstm
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "arima" => Ok(ModelKind::Arima),
            "hw" | "holt-winters" | "holt_winters" => Ok(ModelKind::Hw),
            "prophet" | "prophet_trend" | "trend" => Ok(ModelKind::Prophet),
            "lstm" => Ok(ModelKind::Lstm),
            _ => Err(Error::InvalidArgument(format!("unknown model kind {s:?}"))),
        }
    }
}

/// Kind-specific hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Hyperparameters {
    Arima(ArimaConfig),
    Hw,
    Prophet(TrendConfig),
    Lstm(LstmConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecasterSpec {
    hyperparameters: Hyperparameters,
    pub seed: u64,
}

impl ForecasterSpec {
    pub fn new(hyperparameters: Hyperparameters, seed: u64) -> Result<Self> {
        match &hyperparameters {
            Hyperparameters::Arima(c) => c.validate()?,
            Hyperparameters::Hw => {}
            Hyperparameters::Prophet(c) => c.validate()?,
            Hyperparameters::Lstm(c) => c.validate()?,
        }
        Ok(Self {
            hyperparameters,
            seed,
        })
    }

    /// Default hyperparameters for `kind`.
    pub fn default_for(kind: ModelKind, seed: u64) -> Self {
        let hyperparameters = match kind {
            ModelKind::Arima => Hyperparameters::Arima(ArimaConfig::default()),
            ModelKind::Hw => Hyperparameters::Hw,
            ModelKind::Prophet => Hyperparameters::Prophet(TrendConfig::default()),
            ModelKind::Lstm => Hyperparameters::Lstm(LstmConfig::default()),
        };
        Self {
            hyperparameters,
            seed,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.hyperparameters {
            Hyperparameters::Arima(_) => ModelKind::Arima,
            Hyperparameters::Hw => ModelKind::Hw,
            Hyperparameters::Prophet(_) => ModelKind::Prophet,
            Hyperparameters::Lstm(_) => ModelKind::Lstm,
        }
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyperparameters
    }
}

/// Anything that produces h-step-ahead forecasts from a fitted state.
pub trait Forecast {
    fn predict(&self, horizon: usize) -> Result<Vec<f64>>;
}

/// A fitted base model of any kind.
#[derive(Debug, Clone)]
pub enum FittedModel {
    Arima(ArimaModel),
    Hw(HoltModel),
    Prophet(TrendModel),
    Lstm(LstmForecaster),
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Arima(_) => ModelKind::Arima,
            FittedModel::Hw(_) => ModelKind::Hw,
            FittedModel::Prophet(_) => ModelKind::Prophet,
            FittedModel::Lstm(_) => ModelKind::Lstm,
        }
    }

    /// One-line description of the fitted state for run reports.
    pub fn summary(&self) -> String {
        match self {
            FittedModel::Arima(m) => {
                let o = m.order();
                format!(
                    "order=({},{},{}) constant={} aic={:.4}",
                    o.p,
                    o.d,
                    o.q,
                    m.has_constant(),
                    m.aic()
                )
            }
            FittedModel::Hw(m) => {
                let p = m.params();
                format!("alpha={:.4} gamma={:.4}", p.alpha, p.gamma)
            }
            FittedModel::Prophet(m) => {
                let deltas: Vec<String> = m.delta().iter().map(|d| format!("{d:.4}")).collect();
                format!("k={:.4} m={:.4} delta=[{}]", m.k(), m.m(), deltas.join(" "))
            }
            FittedModel::Lstm(m) => format!("final_loss={:.6}", m.final_loss()),
        }
    }
}

impl Forecast for FittedModel {
    fn predict(&self, horizon: usize) -> Result<Vec<f64>> {
        match self {
            FittedModel::Arima(m) => m.predict(horizon),
            FittedModel::Hw(m) => m.predict(horizon),
            FittedModel::Prophet(m) => m.predict(horizon),
            FittedModel::Lstm(m) => m.predict(horizon),
        }
    }
}

/// Fits the model described by `spec` on `train`.
pub fn fit(spec: &ForecasterSpec, train: &[f64]) -> Result<FittedModel> {
    Ok(match &spec.hyperparameters {
        Hyperparameters::Arima(c) => FittedModel::Arima(arima::fit_arima(train, c)?),
        Hyperparameters::Hw => FittedModel::Hw(holt::fit_hw(train)?),
        Hyperparameters::Prophet(c) => FittedModel::Prophet(trend::fit_prophet_trend(train, c)?),
        Hyperparameters::Lstm(c) => FittedModel::Lstm(lstm::fit_lstm(train, c, spec.seed)?),
    })
}

pub(crate) fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 {
        Err(Error::InvalidArgument("forecast horizon must be >= 1".into()))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse_and_order() {
        for k in ModelKind::ALL {
            assert_eq!(k.label().parse::<ModelKind>().unwrap(), k);
        }
        assert!(ModelKind::Arima < ModelKind::Hw && ModelKind::Prophet < ModelKind::Lstm);
        assert!("gp".parse::<ModelKind>().is_err());
    }

    #[test]
    fn every_kind_returns_exactly_horizon_finite_values() {
        let train: Vec<f64> = (0..30).map(|t| 5.0 + 0.3 * t as f64 + (t as f64).sin()).collect();
        for kind in ModelKind::ALL {
            let mut spec = ForecasterSpec::default_for(kind, 3);
            if kind == ModelKind::Lstm {
                spec = ForecasterSpec::new(
                    Hyperparameters::Lstm(LstmConfig {
                        widths: vec![4, 4],
                        epochs: 3,
                        ..LstmConfig::default()
                    }),
                    3,
                )
                .unwrap();
            }
            let model = fit(&spec, &train).unwrap();
            assert_eq!(model.kind(), kind);
            for h in [1, 7, 14] {
                let f = model.predict(h).unwrap();
                assert_eq!(f.len(), h);
                assert!(f.iter().all(|v| v.is_finite()));
            }
            assert!(model.predict(0).is_err());
            assert!(!model.summary().is_empty());
        }
    }
}
