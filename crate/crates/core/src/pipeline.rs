//! The four-step stacking pipeline.
//!
//! 1. Every base model forecasts every training window twice: from window A
//!    towards the start of B (`d`), and from B towards C (`e`). Meta-features
//!    of each input window are extracted and per-window sMAPE recorded.
//! 2. The two models with the lowest mean `d` sMAPE and the two features
//!    with the highest mean |rho| against that sMAPE are selected; plain and
//!    feature-weighted meta-learners are trained on the `e` rows.
//! 3. The selected pair forecasts the final window of every holdout region.
//! 4. All seven methods are scored on the holdout regions.
//!
//! LSTM fits and meta-learner training depend on the run seed and are
//! repeated for every run; the deterministic base models are fitted once.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{check_disjoint, RunConfig};
use crate::ensemble::{model_average, predict_ensemble, train_meta_learner, EnsembleBundle, MetaLearner};
use crate::error::{Error, Result};
use crate::features::{extract, Feature, MetaFeatureVector};
use crate::forecast::{fit, Forecast, ForecasterSpec, Hyperparameters, ModelKind};
use crate::metrics::{build_score_table, smape, ScoreTable};
use crate::series::{box_cox, estimate_lambda, moving_average, split, BoxCoxParams, SplitSet, TimeSeries, WINDOW_LEN};

/// Largest tolerated share of failed windows.
pub const FAILURE_LIMIT: f64 = 0.25;

/// Leaderboard rows in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    Arima,
    Hw,
    Prophet,
    Lstm,
    ModelAveraging,
    Stacking,
    FeatureWeighted,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Arima,
        Method::Hw,
        Method::Prophet,
        Method::Lstm,
        Method::ModelAveraging,
        Method::Stacking,
        Method::FeatureWeighted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Arima => "ARIMA",
            Method::Hw => "Holt-Winters",
            Method::Prophet => "Prophet",
            Method::Lstm => "LSTM",
            Method::ModelAveraging => "Model Averaging",
            Method::Stacking => "Stacking",
            Method::FeatureWeighted => "Feature-weighted stacking",
        }
    }

    pub fn from_name(name: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn base(kind: ModelKind) -> Method {
        match kind {
            ModelKind::Arima => Method::Arima,
            ModelKind::Hw => Method::Hw,
            ModelKind::Prophet => Method::Prophet,
            ModelKind::Lstm => Method::Lstm,
        }
    }
}

/// A forecasting problem in transformed, smoothed space.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub region: String,
    pub params: BoxCoxParams,
    pub input: Vec<f64>,
    pub input_start: NaiveDate,
    pub target: Vec<f64>,
    pub target_start: NaiveDate,
}

/// Fit input derived from a history window alone.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedInput {
    pub params: BoxCoxParams,
    /// The whole history after Box-Cox, before smoothing.
    pub transformed: TimeSeries,
    pub input: Vec<f64>,
    pub input_start: NaiveDate,
}

/// Box-Cox with lambda estimated on `history`, then a trailing moving
/// average; keeps the last `fit_len` smoothed points.
pub fn prepare_input(history: &TimeSeries, fit_len: usize, window: usize) -> Result<PreparedInput> {
    let params = estimate_lambda(history)?;
    let transformed = box_cox(history, &params)?;
    let smoothed = moving_average(&transformed, window)?;
    let keep = fit_len.min(smoothed.len());
    Ok(PreparedInput {
        params,
        input: smoothed.values()[smoothed.len() - keep..].to_vec(),
        input_start: smoothed.date(smoothed.len() - keep),
        transformed,
    })
}

/// [`prepare_input`] on `history`, plus the smoothed target that continues
/// it over `target`. The input never sees `target`.
pub fn prepare(history: &TimeSeries, fit_len: usize, target: &TimeSeries, window: usize) -> Result<Prepared> {
    if target.start() != history.end() + chrono::Duration::days(1) {
        return Err(Error::InvalidArgument("target must follow the history".into()));
    }
    let PreparedInput {
        params,
        transformed: th,
        input,
        input_start,
    } = prepare_input(history, fit_len, window)?;
    let tt = box_cox(target, &params)?;
    let lead = &th.values()[th.len() - (window - 1)..];
    let joined: Vec<f64> = lead.iter().chain(tt.values()).copied().collect();
    let joined = TimeSeries::new_transformed(history.region_id(), th.date(th.len() - (window - 1)), joined)?;
    let target_values = moving_average(&joined, window)?.values().to_vec();
    Ok(Prepared {
        region: history.region_id().to_string(),
        params,
        input,
        input_start,
        target: target_values,
        target_start: target.start(),
    })
}

/// `d` stage: window A forecasts the first `horizon` days of B.
pub fn prepare_d(s: &SplitSet, window: usize) -> Result<Prepared> {
    let target = s.window_b.slice(0, s.horizon)?;
    prepare(&s.window_a, WINDOW_LEN, &target, window)
}

/// `e` stage: window B forecasts C. Lambda is estimated on A and B.
pub fn prepare_e(s: &SplitSet, window: usize) -> Result<Prepared> {
    let ab = s.window_a.slice(0, WINDOW_LEN)?;
    let joined: Vec<f64> = ab.values().iter().chain(s.window_b.values()).copied().collect();
    let history = TimeSeries::new(s.window_a.region_id(), s.window_a.start(), joined)?;
    prepare(&history, WINDOW_LEN, &s.window_c, window)
}

/// Affine map that expresses values relative to an input window: the last
/// input value becomes 0 and the window's range becomes 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowScale {
    pub anchor: f64,
    pub scale: f64,
}

impl WindowScale {
    pub fn of(input: &[f64]) -> Self {
        let lo = input.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = input.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        Self {
            anchor: *input.last().expect("non-empty window"),
            scale: if range > 0.0 { range } else { 1.0 },
        }
    }

    pub fn to_relative(&self, v: f64) -> f64 {
        (v - self.anchor) / self.scale
    }

    pub fn from_relative(&self, v: f64) -> f64 {
        self.anchor + v * self.scale
    }
}

/// Deterministic seed derivation.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn spec_for(cfg: &RunConfig, kind: ModelKind, seed: u64) -> Result<ForecasterSpec> {
    let hp = match kind {
        ModelKind::Arima => Hyperparameters::Arima(cfg.arima()),
        ModelKind::Hw => Hyperparameters::Hw,
        ModelKind::Prophet => Hyperparameters::Prophet(cfg.trend()),
        ModelKind::Lstm => Hyperparameters::Lstm(cfg.lstm()),
    };
    ForecasterSpec::new(hp, seed)
}

/// Fits one base model on `p.input` and forecasts `p.target.len()` steps.
pub fn base_forecast(cfg: &RunConfig, kind: ModelKind, seed: u64, p: &Prepared) -> Result<Vec<f64>> {
    forecast_input(cfg, kind, seed, &p.input, p.target.len())
}

/// Fits one base model on `input` and forecasts `horizon` steps.
pub fn forecast_input(cfg: &RunConfig, kind: ModelKind, seed: u64, input: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let model = fit(&spec_for(cfg, kind, seed)?, input)?;
    let f = model.predict(horizon)?;
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{kind} produced a non-finite forecast")));
    }
    Ok(f)
}

/// The two models with the lowest mean sMAPE, best first. Ties follow the
/// model declaration order.
pub fn select_base_pair(means: &BTreeMap<ModelKind, f64>) -> Result<[ModelKind; 2]> {
    let mut ranked: Vec<(ModelKind, f64)> = means.iter().map(|(k, v)| (*k, *v)).collect();
    if ranked.len() < 2 {
        return Err(Error::InvalidArgument("need at least two models to select a pair".into()));
    }
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok([ranked[0].0, ranked[1].0])
}

/// The two features with the highest mean |rho|, best first. Ties follow the
/// feature declaration order.
pub fn select_feature_pair(table: &ScoreTable) -> Result<[Feature; 2]> {
    let mut ranked = table.mean_abs_by_feature();
    if ranked.len() < 2 {
        return Err(Error::InvalidArgument("need at least two features to select a pair".into()));
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok([ranked[0].0, ranked[1].0])
}

/// Training and holdout series, each carrying its region id.
#[derive(Debug, Clone)]
pub struct PipelineData {
    pub train: Vec<TimeSeries>,
    pub holdout: Vec<TimeSeries>,
}

impl PipelineData {
    pub fn new(train: Vec<TimeSeries>, holdout: Vec<TimeSeries>) -> Result<Self> {
        let ids = |v: &[TimeSeries]| v.iter().map(|s| s.region_id().to_string()).collect::<Vec<_>>();
        check_disjoint(&ids(&train), &ids(&holdout))?;
        if train.is_empty() || holdout.is_empty() {
            return Err(Error::Config("need at least one training and one holdout region".into()));
        }
        Ok(Self { train, holdout })
    }
}

/// A training window after preprocessing.
#[derive(Debug, Clone)]
pub struct TrainingWindow {
    pub region_index: usize,
    pub window_index: usize,
    pub window_start: NaiveDate,
    pub d: Prepared,
    pub e: Prepared,
    pub d_features: MetaFeatureVector,
    pub e_features: MetaFeatureVector,
}

#[derive(Debug, Clone)]
pub struct HoldoutWindow {
    pub region_index: usize,
    pub e: Prepared,
    pub features: MetaFeatureVector,
    /// Original-unit actuals of window C.
    pub actual: Vec<f64>,
    pub dates: Vec<NaiveDate>,
    /// Original-unit history (windows A and B).
    pub history: TimeSeries,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Failure {
    pub horizon: usize,
    /// `None` for failures shared by every run.
    pub run: Option<usize>,
    pub region: String,
    pub window_start: Option<NaiveDate>,
    pub stage: String,
    pub message: String,
}

/// One step-1 window as it is written to the run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowScore {
    pub region: String,
    pub window_start: NaiveDate,
    pub features: MetaFeatureVector,
    pub smape: BTreeMap<ModelKind, f64>,
}

/// One meta-learner training row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaRow {
    pub region: String,
    pub window_start: NaiveDate,
    pub step: usize,
    pub inputs: Vec<f64>,
    pub target: f64,
}

/// Holdout forecasts of one region in transformed space.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutForecast {
    pub region: String,
    pub target: Vec<f64>,
    pub forecasts: BTreeMap<Method, Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run: usize,
    pub seed: u64,
    pub d_means: BTreeMap<ModelKind, f64>,
    pub score_table: ScoreTable,
    pub base_pair: [ModelKind; 2],
    pub feature_pair: [Feature; 2],
    pub windows: Vec<WindowScore>,
    pub meta_rows: Vec<MetaRow>,
    pub stacking: EnsembleBundle,
    pub feature_weighted: EnsembleBundle,
    pub holdout: Vec<HoldoutForecast>,
    pub leaderboard: BTreeMap<Method, f64>,
}

/// Holdout forecasts of one region in original units, averaged over runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionForecast {
    pub region: String,
    pub dates: Vec<NaiveDate>,
    pub actual: Vec<f64>,
    pub forecasts: BTreeMap<Method, Vec<f64>>,
    pub history: TimeSeries,
}

#[derive(Debug, Clone)]
pub struct HorizonReport {
    pub horizon: usize,
    pub runs: Vec<RunOutcome>,
    /// Signed rho averaged over runs.
    pub score_table: ScoreTable,
    /// Mean over runs of each method's holdout sMAPE.
    pub leaderboard: BTreeMap<Method, f64>,
    pub forecasts: Vec<RegionForecast>,
    pub failures: Vec<Failure>,
    pub n_windows: usize,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub horizons: Vec<HorizonReport>,
    pub train_regions: Vec<String>,
    pub holdout_regions: Vec<String>,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    data: &'a PipelineData,
    horizon: usize,
}

const DETERMINISTIC: [ModelKind; 3] = [ModelKind::Arima, ModelKind::Hw, ModelKind::Prophet];

type Forecasts = BTreeMap<ModelKind, Vec<f64>>;

/// Step 1, shared part: windows, features and deterministic forecasts.
struct Step1Base {
    windows: Vec<TrainingWindow>,
    d: Vec<Forecasts>,
    e: Vec<Forecasts>,
    failures: Vec<Failure>,
    total: usize,
}

/// Windows of `series` aligned so the last one ends on the final day.
pub fn aligned_splits(series: &TimeSeries, horizon: usize, stride: usize) -> Result<Vec<SplitSet>> {
    let needed = 2 * WINDOW_LEN + horizon;
    if series.len() < needed {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            horizon,
            needed,
        });
    }
    let offset = (series.len() - needed) % stride;
    split(&series.slice(offset, series.len() - offset)?, horizon, stride)
}

fn training_windows(ctx: &Ctx) -> Result<Vec<(usize, usize, SplitSet)>> {
    let mut tasks = Vec::new();
    for (ri, series) in ctx.data.train.iter().enumerate() {
        let mut sets = aligned_splits(series, ctx.horizon, ctx.cfg.stride)?;
        if let Some(max) = ctx.cfg.max_windows {
            let drop = sets.len().saturating_sub(max);
            sets.drain(..drop);
        }
        tasks.extend(sets.into_iter().enumerate().map(|(wi, s)| (ri, wi, s)));
    }
    Ok(tasks)
}

fn step1_base(ctx: &Ctx) -> Result<Step1Base> {
    let tasks = training_windows(ctx)?;
    let total = tasks.len();
    let w = ctx.cfg.smoothing_window;
    let results: Vec<std::result::Result<(TrainingWindow, Forecasts, Forecasts), Failure>> = tasks
        .par_iter()
        .map(|(ri, wi, s)| {
            let fail = |stage: &str, e: Error| Failure {
                horizon: ctx.horizon,
                run: None,
                region: s.window_a.region_id().to_string(),
                window_start: Some(s.window_a.start()),
                stage: stage.to_string(),
                message: e.to_string(),
            };
            let d = prepare_d(s, w).map_err(|e| fail("prepare-d", e))?;
            let e = prepare_e(s, w).map_err(|e| fail("prepare-e", e))?;
            let d_features = extract(&d.input).map_err(|e| fail("features-d", e))?;
            let e_features = extract(&e.input).map_err(|e| fail("features-e", e))?;
            let mut fd = Forecasts::new();
            let mut fe = Forecasts::new();
            for kind in DETERMINISTIC {
                fd.insert(kind, base_forecast(ctx.cfg, kind, 0, &d).map_err(|x| fail(&format!("{kind}-d"), x))?);
                fe.insert(kind, base_forecast(ctx.cfg, kind, 0, &e).map_err(|x| fail(&format!("{kind}-e"), x))?);
            }
            Ok((
                TrainingWindow {
                    region_index: *ri,
                    window_index: *wi,
                    window_start: s.window_a.start(),
                    d,
                    e,
                    d_features,
                    e_features,
                },
                fd,
                fe,
            ))
        })
        .collect();
    let mut base = Step1Base {
        windows: Vec::new(),
        d: Vec::new(),
        e: Vec::new(),
        failures: Vec::new(),
        total,
    };
    for r in results {
        match r {
            Ok((win, fd, fe)) => {
                base.windows.push(win);
                base.d.push(fd);
                base.e.push(fe);
            }
            Err(f) => base.failures.push(f),
        }
    }
    Ok(base)
}

struct HoldoutBase {
    windows: Vec<HoldoutWindow>,
    forecasts: Vec<Forecasts>,
    failures: Vec<Failure>,
}

fn holdout_base(ctx: &Ctx) -> Result<HoldoutBase> {
    let w = ctx.cfg.smoothing_window;
    let mut finals = Vec::new();
    for (ri, series) in ctx.data.holdout.iter().enumerate() {
        let last = aligned_splits(series, ctx.horizon, ctx.cfg.stride)?
            .pop()
            .expect("aligned split yields at least one window");
        finals.push((ri, last));
    }
    let results: Vec<std::result::Result<(HoldoutWindow, Forecasts), Failure>> = finals
        .par_iter()
        .map(|(ri, s)| {
            let fail = |stage: &str, e: Error| Failure {
                horizon: ctx.horizon,
                run: None,
                region: s.window_a.region_id().to_string(),
                window_start: Some(s.window_a.start()),
                stage: stage.to_string(),
                message: e.to_string(),
            };
            let e = prepare_e(s, w).map_err(|e| fail("prepare-holdout", e))?;
            let features = extract(&e.input).map_err(|e| fail("features-holdout", e))?;
            let mut f = Forecasts::new();
            for kind in DETERMINISTIC {
                f.insert(kind, base_forecast(ctx.cfg, kind, 0, &e).map_err(|x| fail(&format!("{kind}-holdout"), x))?);
            }
            let history_values: Vec<f64> = s.window_a.values().iter().chain(s.window_b.values()).copied().collect();
            Ok((
                HoldoutWindow {
                    region_index: *ri,
                    e,
                    features,
                    actual: s.window_c.values().to_vec(),
                    dates: s.window_c.dates().collect(),
                    history: TimeSeries::new(s.window_a.region_id(), s.window_a.start(), history_values)
                        .expect("windows hold valid counts"),
                },
                f,
            ))
        })
        .collect();
    let mut out = HoldoutBase {
        windows: Vec::new(),
        forecasts: Vec::new(),
        failures: Vec::new(),
    };
    for r in results {
        match r {
            Ok((win, f)) => {
                out.windows.push(win);
                out.forecasts.push(f);
            }
            Err(f) => out.failures.push(f),
        }
    }
    Ok(out)
}

fn check_failures(horizon: usize, failed: usize, total: usize) -> Result<()> {
    if total == 0 || failed as f64 > FAILURE_LIMIT * total as f64 {
        warn!("horizon {horizon}: {failed} of {total} windows failed");
        return Err(Error::FailureThreshold { failed, total });
    }
    Ok(())
}

const LSTM_D: u64 = 1;
const LSTM_E: u64 = 2;
const LSTM_HOLDOUT: u64 = 3;
const MLP_PLAIN: u64 = 10;
const MLP_FEATURES: u64 = 11;

fn lstm_seed(run_seed: u64, horizon: usize, tag: u64, region: usize, window: usize) -> u64 {
    derive_seed(run_seed, &[horizon as u64, tag, region as u64, window as u64])
}

/// Meta-learner rows of one window: forecasts and target relative to the
/// input window, optionally followed by the selected features.
pub fn window_rows(
    input: &[f64],
    f1: &[f64],
    f2: &[f64],
    target: Option<&[f64]>,
) -> (WindowScale, Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
    let ws = WindowScale::of(input);
    let r1 = f1.iter().map(|&v| ws.to_relative(v)).collect();
    let r2 = f2.iter().map(|&v| ws.to_relative(v)).collect();
    let rt = target.map(|t| t.iter().map(|&v| ws.to_relative(v)).collect());
    (ws, r1, r2, rt)
}

/// Stacked forecast of one window in transformed space.
pub fn stacked_forecast(bundle: &EnsembleBundle, input: &[f64], f1: &[f64], f2: &[f64], features: &MetaFeatureVector) -> Result<Vec<f64>> {
    let (ws, r1, r2, _) = window_rows(input, f1, f2, None);
    Ok(predict_ensemble(bundle, &r1, &r2, features)?
        .into_iter()
        .map(|v| ws.from_relative(v))
        .collect())
}

fn run_once(ctx: &Ctx, base: &Step1Base, hold: &HoldoutBase, run: usize) -> Result<(RunOutcome, Vec<Failure>)> {
    let cfg = ctx.cfg;
    let h = ctx.horizon;
    let run_seed = cfg.seed + run as u64;
    let train_ids = |w: &TrainingWindow| ctx.data.train[w.region_index].region_id().to_string();
    let mut failures = Vec::new();
    let fail = |region: String, start: Option<NaiveDate>, stage: &str, e: Error| Failure {
        horizon: h,
        run: Some(run),
        region,
        window_start: start,
        stage: stage.to_string(),
        message: e.to_string(),
    };

    // step 1: the stochastic model on every surviving window
    info!("horizon {h} run {run}: step 1 ({} windows)", base.windows.len());
    let lstm_d: Vec<Result<Vec<f64>>> = base
        .windows
        .par_iter()
        .map(|w| {
            let seed = lstm_seed(run_seed, h, LSTM_D, w.region_index, w.window_index);
            base_forecast(cfg, ModelKind::Lstm, seed, &w.d)
        })
        .collect();
    let mut ok = Vec::new();
    let mut d_all: Vec<Forecasts> = Vec::new();
    for (i, r) in lstm_d.into_iter().enumerate() {
        match r {
            Ok(f) => {
                let mut fc = base.d[i].clone();
                fc.insert(ModelKind::Lstm, f);
                ok.push(i);
                d_all.push(fc);
            }
            Err(e) => failures.push(fail(
                train_ids(&base.windows[i]),
                Some(base.windows[i].window_start),
                "LSTM-d",
                e,
            )),
        }
    }
    check_failures(h, base.failures.len() + failures.len(), base.total)?;
    if ok.len() < 3 {
        return Err(Error::FailureThreshold {
            failed: base.total - ok.len(),
            total: base.total,
        });
    }

    let mut windows = Vec::with_capacity(ok.len());
    let mut per_model: BTreeMap<ModelKind, Vec<f64>> = BTreeMap::new();
    for (&i, fc) in ok.iter().zip(&d_all) {
        let w = &base.windows[i];
        let mut scores = BTreeMap::new();
        for (kind, f) in fc {
            let s = smape(f, &w.d.target)?;
            scores.insert(*kind, s);
            per_model.entry(*kind).or_default().push(s);
        }
        windows.push(WindowScore {
            region: train_ids(w),
            window_start: w.window_start,
            features: w.d_features,
            smape: scores,
        });
    }

    // step 2
    let d_means: BTreeMap<ModelKind, f64> = per_model
        .iter()
        .map(|(k, v)| (*k, v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    let features: Vec<MetaFeatureVector> = windows.iter().map(|w| w.features).collect();
    let score_table = build_score_table(&features, &per_model)?;
    let base_pair = select_base_pair(&d_means)?;
    let feature_pair = select_feature_pair(&score_table)?;
    info!("horizon {h} run {run}: selected {base_pair:?} with {feature_pair:?}");

    let needs_lstm = base_pair.contains(&ModelKind::Lstm);
    let lstm_e: Vec<Option<Result<Vec<f64>>>> = ok
        .par_iter()
        .map(|&i| {
            needs_lstm.then(|| {
                let w = &base.windows[i];
                let seed = lstm_seed(run_seed, h, LSTM_E, w.region_index, w.window_index);
                base_forecast(cfg, ModelKind::Lstm, seed, &w.e)
            })
        })
        .collect();
    let mut meta_rows = Vec::new();
    let mut plain_rows = Vec::new();
    let mut fw_rows = Vec::new();
    for (&i, lstm) in ok.iter().zip(lstm_e) {
        let w = &base.windows[i];
        let lstm = match lstm {
            Some(Ok(f)) => Some(f),
            Some(Err(e)) => {
                failures.push(fail(train_ids(w), Some(w.window_start), "LSTM-e", e));
                continue;
            }
            None => None,
        };
        let get = |k: ModelKind| match k {
            ModelKind::Lstm => lstm.clone().expect("LSTM forecast present when selected"),
            _ => base.e[i][&k].clone(),
        };
        let (f1, f2) = (get(base_pair[0]), get(base_pair[1]));
        let (_, r1, r2, rt) = window_rows(&w.e.input, &f1, &f2, Some(&w.e.target));
        let rt = rt.expect("target given");
        let plain = crate::ensemble::stack_inputs(&r1, &r2, None)?;
        let fw = crate::ensemble::stack_inputs(&r1, &r2, Some((&w.e_features, feature_pair)))?;
        for (step, ((p, x), y)) in plain.into_iter().zip(fw).zip(rt).enumerate() {
            meta_rows.push(MetaRow {
                region: train_ids(w),
                window_start: w.window_start,
                step,
                inputs: x.clone(),
                target: y,
            });
            plain_rows.push((p, y));
            fw_rows.push((x, y));
        }
    }
    check_failures(h, base.failures.len() + failures.len(), base.total)?;
    info!("horizon {h} run {run}: training meta-learners on {} rows", plain_rows.len());
    let mlp = cfg.mlp();
    let (plain_learner, fw_learner): (Result<MetaLearner>, Result<MetaLearner>) = rayon::join(
        || train_meta_learner(&plain_rows, &mlp, derive_seed(run_seed, &[h as u64, MLP_PLAIN])),
        || train_meta_learner(&fw_rows, &mlp, derive_seed(run_seed, &[h as u64, MLP_FEATURES])),
    );
    let stacking = EnsembleBundle::new(h, base_pair, feature_pair, false, plain_learner?)?;
    let feature_weighted = EnsembleBundle::new(h, base_pair, feature_pair, true, fw_learner?)?;

    // steps 3 and 4
    let lstm_hold: Vec<Result<Vec<f64>>> = hold
        .windows
        .par_iter()
        .map(|w| base_forecast(cfg, ModelKind::Lstm, lstm_seed(run_seed, h, LSTM_HOLDOUT, w.region_index, 0), &w.e))
        .collect();
    let mut holdout = Vec::new();
    for ((w, det), lstm) in hold.windows.iter().zip(&hold.forecasts).zip(lstm_hold) {
        let region = ctx.data.holdout[w.region_index].region_id().to_string();
        let lstm = match lstm {
            Ok(f) => f,
            Err(e) => {
                failures.push(fail(region, Some(w.history.start()), "LSTM-holdout", e));
                continue;
            }
        };
        let mut all = det.clone();
        all.insert(ModelKind::Lstm, lstm);
        let (f1, f2) = step3_pair(&all, base_pair);
        let mut forecasts: BTreeMap<Method, Vec<f64>> =
            all.iter().map(|(k, f)| (Method::base(*k), f.clone())).collect();
        forecasts.insert(Method::ModelAveraging, model_average(f1, f2)?);
        forecasts.insert(Method::Stacking, stacked_forecast(&stacking, &w.e.input, f1, f2, &w.features)?);
        forecasts.insert(
            Method::FeatureWeighted,
            stacked_forecast(&feature_weighted, &w.e.input, f1, f2, &w.features)?,
        );
        holdout.push(HoldoutForecast {
            region,
            target: w.e.target.clone(),
            forecasts,
        });
    }
    let hold_total = ctx.data.holdout.len();
    let hold_failed = hold_total - holdout.len();
    if holdout.is_empty() || hold_failed as f64 > FAILURE_LIMIT * hold_total as f64 {
        return Err(Error::FailureThreshold {
            failed: hold_failed,
            total: hold_total,
        });
    }
    let leaderboard = step4_scores(&holdout)?;
    Ok((
        RunOutcome {
            run,
            seed: run_seed,
            d_means,
            score_table,
            base_pair,
            feature_pair,
            windows,
            meta_rows,
            stacking,
            feature_weighted,
            holdout,
            leaderboard,
        },
        failures,
    ))
}

/// The selected pair's holdout forecasts, best model first.
pub fn step3_pair(all: &Forecasts, pair: [ModelKind; 2]) -> (&[f64], &[f64]) {
    (&all[&pair[0]], &all[&pair[1]])
}

/// Mean holdout sMAPE of every method.
pub fn step4_scores(holdout: &[HoldoutForecast]) -> Result<BTreeMap<Method, f64>> {
    let mut out = BTreeMap::new();
    for m in Method::ALL {
        let mut sum = 0.0;
        for r in holdout {
            sum += smape(&r.forecasts[&m], &r.target)?;
        }
        out.insert(m, sum / holdout.len() as f64);
    }
    Ok(out)
}

fn run_horizon(cfg: &RunConfig, data: &PipelineData, horizon: usize) -> Result<HorizonReport> {
    let ctx = Ctx { cfg, data, horizon };
    info!("horizon {horizon}: preparing windows");
    let base = step1_base(&ctx)?;
    check_failures(horizon, base.failures.len(), base.total)?;
    let hold = holdout_base(&ctx)?;
    let mut failures = base.failures.clone();
    failures.extend(hold.failures.iter().cloned());

    let mut runs = Vec::with_capacity(cfg.n_runs);
    for run in 0..cfg.n_runs {
        let (outcome, f) = run_once(&ctx, &base, &hold, run)?;
        failures.extend(f);
        runs.push(outcome);
    }

    let score_table = ScoreTable::mean_of(&runs.iter().map(|r| r.score_table.clone()).collect::<Vec<_>>())?;
    let mut leaderboard = BTreeMap::new();
    for m in Method::ALL {
        let mean = runs.iter().map(|r| r.leaderboard[&m]).sum::<f64>() / runs.len() as f64;
        leaderboard.insert(m, mean);
    }
    let forecasts = original_unit_forecasts(&hold, &runs, data);
    failures.sort();
    Ok(HorizonReport {
        horizon,
        runs,
        score_table,
        leaderboard,
        forecasts,
        failures,
        n_windows: base.total,
    })
}

/// Run-averaged holdout forecasts mapped back to counts. Smoothed values are
/// inverted through Box-Cox directly.
fn original_unit_forecasts(hold: &HoldoutBase, runs: &[RunOutcome], data: &PipelineData) -> Vec<RegionForecast> {
    let mut out = Vec::new();
    for w in &hold.windows {
        let region = data.holdout[w.region_index].region_id();
        let per_run: Vec<&HoldoutForecast> = runs
            .iter()
            .filter_map(|r| r.holdout.iter().find(|f| f.region == region))
            .collect();
        if per_run.is_empty() {
            continue;
        }
        let mut forecasts = BTreeMap::new();
        for m in Method::ALL {
            let mut acc = vec![0.0; w.actual.len()];
            for f in &per_run {
                for (a, v) in acc.iter_mut().zip(&f.forecasts[&m]) {
                    *a += w.e.params.inverse_clamped(*v);
                }
            }
            acc.iter_mut().for_each(|a| *a /= per_run.len() as f64);
            forecasts.insert(m, acc);
        }
        out.push(RegionForecast {
            region: region.to_string(),
            dates: w.dates.clone(),
            actual: w.actual.clone(),
            forecasts,
            history: w.history.clone(),
        });
    }
    out
}

/// Runs every configured horizon. `jobs` caps window-level parallelism.
pub fn run_pipeline(cfg: &RunConfig, data: &PipelineData) -> Result<RunReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| {
        let mut horizons = Vec::new();
        let mut hs = cfg.horizons.clone();
        hs.sort_unstable();
        for h in hs {
            horizons.push(run_horizon(cfg, data, h)?);
        }
        let report = RunReport {
            horizons,
            train_regions: data.train.iter().map(|s| s.region_id().to_string()).collect(),
            holdout_regions: data.holdout.iter().map(|s| s.region_id().to_string()).collect(),
        };
        audit_regions(&report)?;
        Ok(report)
    })
}

/// Checks that no holdout region appears in any step-1 or step-2 artifact.
pub fn audit_regions(report: &RunReport) -> Result<()> {
    let holdout: std::collections::BTreeSet<&str> = report.holdout_regions.iter().map(String::as_str).collect();
    for hr in &report.horizons {
        for run in &hr.runs {
            let leaked = run
                .windows
                .iter()
                .map(|w| w.region.as_str())
                .chain(run.meta_rows.iter().map(|r| r.region.as_str()))
                .find(|r| holdout.contains(r));
            if let Some(r) = leaked {
                return Err(Error::InvalidArgument(format!("holdout region {r} found in training artifacts")));
            }
        }
    }
    Ok(())
}
