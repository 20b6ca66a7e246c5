//! Run configuration: a flat TOML file whose keys all have defaults.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::ensemble::MlpConfig;
use crate::error::{Error, Result};
use crate::forecast::{ArimaConfig, LstmConfig, TrendConfig};

pub const DEFAULT_TRAIN_REGIONS: [&str; 20] = [
    "Australia",
    "Algeria",
    "Brazil",
    "France",
    "Germany",
    "India",
    "Italy",
    "Japan",
    "Kenya",
    "Mexico",
    "Poland",
    "Russia",
    "South Africa",
    "Turkey",
    "US",
    "Peru",
    "Lebanon",
    "Chile",
    "Bangladesh",
    "United Kingdom",
];

pub const DEFAULT_HOLDOUT_REGIONS: [&str; 7] = [
    "Saudi Arabia",
    "Canada",
    "Portugal",
    "Egypt",
    "Belgium",
    "Netherlands",
    "Sweden",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Cumulative-confirmed CSV snapshot.
    pub snapshot: Option<PathBuf>,
    /// Synthetic curve file used instead of a snapshot.
    pub synthetic: Option<PathBuf>,
    pub horizons: Vec<usize>,
    /// Defaults to the built-in list for snapshots and to the `train` curves
    /// of a synthetic file.
    pub train_regions: Option<Vec<String>>,
    pub holdout_regions: Option<Vec<String>>,
    pub stride: usize,
    /// Keep at most this many of the latest windows per training region.
    pub max_windows: Option<usize>,
    pub n_runs: usize,
    pub seed: u64,
    pub smoothing_window: usize,
    /// Ignore data after this date.
    pub end_date: Option<NaiveDate>,
    pub repair_monotone: bool,
    pub output_dir: PathBuf,
    /// Worker threads for window-level work; all cores when absent.
    pub jobs: Option<usize>,

    pub arima_max_p: usize,
    pub arima_max_d: usize,
    pub arima_max_q: usize,
    pub n_changepoints: usize,
    pub changepoint_range: f64,
    pub changepoint_ridge: f64,
    pub lstm_widths: Vec<usize>,
    pub lstm_seq_len: usize,
    pub lstm_batch_size: usize,
    pub lstm_epochs: usize,
    pub lstm_learning_rate: f64,
    pub mlp_hidden: Vec<usize>,
    pub mlp_epochs: usize,
    pub mlp_learning_rate: f64,
    pub mlp_batch_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let arima = ArimaConfig::default();
        let trend = TrendConfig::default();
        let lstm = LstmConfig::default();
        let mlp = MlpConfig::default();
        Self {
            snapshot: None,
            synthetic: None,
            horizons: vec![7, 14],
            train_regions: None,
            holdout_regions: None,
            stride: 7,
            max_windows: Some(9),
            n_runs: 5,
            seed: 42,
            smoothing_window: 2,
            end_date: None,
            repair_monotone: false,
            output_dir: PathBuf::from("fwstack-out"),
            jobs: None,
            arima_max_p: arima.max_p,
            arima_max_d: arima.max_d,
            arima_max_q: arima.max_q,
            n_changepoints: trend.n_changepoints,
            changepoint_range: trend.changepoint_range,
            changepoint_ridge: trend.ridge,
            lstm_widths: lstm.widths,
            lstm_seq_len: lstm.seq_len,
            lstm_batch_size: lstm.batch_size,
            lstm_epochs: lstm.epochs,
            lstm_learning_rate: lstm.learning_rate,
            mlp_hidden: mlp.hidden,
            mlp_epochs: mlp.epochs,
            mlp_learning_rate: mlp.learning_rate,
            mlp_batch_size: mlp.batch_size,
        }
    }
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.snapshot, &mut cfg.synthetic].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn arima(&self) -> ArimaConfig {
        ArimaConfig {
            max_p: self.arima_max_p,
            max_d: self.arima_max_d,
            max_q: self.arima_max_q,
        }
    }

    pub fn trend(&self) -> TrendConfig {
        TrendConfig {
            n_changepoints: self.n_changepoints,
            changepoint_range: self.changepoint_range,
            ridge: self.changepoint_ridge,
        }
    }

    pub fn lstm(&self) -> LstmConfig {
        LstmConfig {
            widths: self.lstm_widths.clone(),
            seq_len: self.lstm_seq_len,
            batch_size: self.lstm_batch_size,
            epochs: self.lstm_epochs,
            learning_rate: self.lstm_learning_rate,
        }
    }

    pub fn mlp(&self) -> MlpConfig {
        MlpConfig {
            hidden: self.mlp_hidden.clone(),
            epochs: self.mlp_epochs,
            learning_rate: self.mlp_learning_rate,
            batch_size: self.mlp_batch_size,
        }
    }

    /// Checks every invariant that does not need the data.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        match (&self.snapshot, &self.synthetic) {
            (Some(_), Some(_)) => return cfg_err("set only one of `snapshot` and `synthetic`".into()),
            (None, None) => return cfg_err("one of `snapshot` or `synthetic` is required".into()),
            _ => {}
        }
        if self.horizons.is_empty() {
            return cfg_err("`horizons` is empty".into());
        }
        let mut seen = BTreeSet::new();
        for &h in &self.horizons {
            if h != 7 && h != 14 {
                return cfg_err(format!("horizon {h} not in {{7, 14}}"));
            }
            if !seen.insert(h) {
                return cfg_err(format!("horizon {h} listed twice"));
            }
        }
        if self.n_runs == 0 {
            return cfg_err("`n_runs` must be >= 1".into());
        }
        if self.stride == 0 {
            return cfg_err("`stride` must be >= 1".into());
        }
        if self.max_windows == Some(0) {
            return cfg_err("`max_windows` must be >= 1".into());
        }
        if self.smoothing_window == 0 || self.smoothing_window > 10 {
            return cfg_err("`smoothing_window` must be in 1..=10".into());
        }
        if self.jobs == Some(0) {
            return cfg_err("`jobs` must be >= 1".into());
        }
        if let (Some(t), Some(h)) = (&self.train_regions, &self.holdout_regions) {
            check_disjoint(t, h)?;
        }
        self.arima().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.trend().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.lstm().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.mlp().validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

pub fn check_disjoint(train: &[String], holdout: &[String]) -> Result<()> {
    let t: BTreeSet<&String> = train.iter().collect();
    if let Some(r) = holdout.iter().find(|r| t.contains(r)) {
        return Err(Error::Config(format!("region {r:?} is both a training and a holdout region")));
    }
    if t.len() != train.len() {
        return Err(Error::Config("duplicate training region".into()));
    }
    if holdout.iter().collect::<BTreeSet<_>>().len() != holdout.len() {
        return Err(Error::Config("duplicate holdout region".into()));
    }
    Ok(())
}
