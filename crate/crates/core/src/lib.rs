//! Feature-weighted stacking for nonseasonal time-series forecasting.
//!
//! Four base forecasters (ARIMA, Holt's double exponential smoothing, a
//! piecewise-linear changepoint trend and a stacked LSTM) produce preliminary
//! forecasts. Meta-features of each input window are correlated with the base
//! models' accuracy, and an MLP meta-learner combines the two strongest base
//! models with the two most informative meta-features.

pub mod app;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod forecast;
pub mod ingest;
pub mod metrics;
pub mod optim;
pub mod report;
pub mod pipeline;
pub mod series;
pub mod synth;

pub use error::{Error, Result};
