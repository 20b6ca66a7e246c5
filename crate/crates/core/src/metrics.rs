//! Accuracy scores and the Spearman feature/accuracy correlation table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Feature, MetaFeatureVector};
use crate::forecast::ModelKind;

fn check_lengths(forecast: &[f64], actual: &[f64]) -> Result<()> {
    if forecast.len() != actual.len() {
        return Err(Error::LengthMismatch {
            left: forecast.len(),
            right: actual.len(),
        });
    }
    if forecast.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Symmetric MAPE in `[0, 2]`; a term with `F = A = 0` contributes 0.
pub fn smape(forecast: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(forecast, actual)?;
    let total: f64 = forecast
        .iter()
        .zip(actual)
        .map(|(f, a)| {
            let denom = f.abs() + a.abs();
            if denom == 0.0 {
                0.0
            } else {
                2.0 * (f - a).abs() / denom
            }
        })
        .sum();
    Ok(total / forecast.len() as f64)
}

pub fn mae(forecast: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(forecast, actual)?;
    Ok(forecast
        .iter()
        .zip(actual)
        .map(|(f, a)| (f - a).abs())
        .sum::<f64>()
        / forecast.len() as f64)
}

/// 1-based ranks with ties sharing the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman rank correlation. Constant input has no ranking and scores 0.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::TooShort {
            needed: 3,
            got: x.len(),
        });
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// Signed Spearman correlation between each meta-feature and each model's
/// per-window sMAPE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub models: Vec<ModelKind>,
    pub features: Vec<Feature>,
    /// Row-major, `models.len() x features.len()`.
    pub cells: Vec<f64>,
}

impl ScoreTable {
    pub fn from_cells(models: Vec<ModelKind>, features: Vec<Feature>, cells: Vec<f64>) -> Result<Self> {
        if cells.len() != models.len() * features.len() {
            return Err(Error::LengthMismatch {
                left: cells.len(),
                right: models.len() * features.len(),
            });
        }
        Ok(Self {
            models,
            features,
            cells,
        })
    }

    pub fn get(&self, model: ModelKind, feature: Feature) -> Option<f64> {
        let r = self.models.iter().position(|&m| m == model)?;
        let c = self.features.iter().position(|&f| f == feature)?;
        Some(self.cells[r * self.features.len() + c])
    }

    /// Mean of `|rho|` down each feature column.
    pub fn mean_abs_by_feature(&self) -> Vec<(Feature, f64)> {
        let width = self.features.len();
        self.features
            .iter()
            .enumerate()
            .map(|(c, &f)| {
                let sum: f64 = (0..self.models.len()).map(|r| self.cells[r * width + c].abs()).sum();
                (f, sum / self.models.len().max(1) as f64)
            })
            .collect()
    }

    /// Element-wise mean of tables sharing the same labels.
    pub fn mean_of(tables: &[ScoreTable]) -> Result<ScoreTable> {
        let first = tables.first().ok_or(Error::EmptyInput)?;
        let mut cells = vec![0.0; first.cells.len()];
        for t in tables {
            if t.models != first.models || t.features != first.features {
                return Err(Error::InvalidArgument("score tables have different labels".into()));
            }
            for (acc, v) in cells.iter_mut().zip(&t.cells) {
                *acc += v;
            }
        }
        for c in &mut cells {
            *c /= tables.len() as f64;
        }
        ScoreTable::from_cells(first.models.clone(), first.features.clone(), cells)
    }
}

pub fn build_score_table(
    per_window_features: &[MetaFeatureVector],
    per_window_scores: &BTreeMap<ModelKind, Vec<f64>>,
) -> Result<ScoreTable> {
    let n = per_window_features.len();
    let models: Vec<ModelKind> = per_window_scores.keys().copied().collect();
    let features = Feature::ALL.to_vec();
    let mut cells = Vec::with_capacity(models.len() * features.len());
    for model in &models {
        let scores = &per_window_scores[model];
        if scores.len() != n {
            return Err(Error::LengthMismatch {
                left: scores.len(),
                right: n,
            });
        }
        for &feature in &features {
            let column: Vec<f64> = per_window_features.iter().map(|v| v.get(feature)).collect();
            cells.push(spearman_rho(&column, scores)?);
        }
    }
    ScoreTable::from_cells(models, features, cells)
}
