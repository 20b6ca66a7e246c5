//! Combiners over a pair of base forecasts: model averaging, plain MLP
//! stacking, and feature-weighted MLP stacking where the meta-learner also
//! sees meta-features of the input window.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Feature, MetaFeatureVector};
use crate::forecast::ModelKind;
use crate::optim::Adam;

pub const BUNDLE_FORMAT: &str = "fwstack-ensemble";
pub const BUNDLE_VERSION: u32 = 1;

/// Elementwise mean of two forecasts.
pub fn model_average(f1: &[f64], f2: &[f64]) -> Result<Vec<f64>> {
    if f1.len() != f2.len() {
        return Err(Error::LengthMismatch {
            left: f1.len(),
            right: f2.len(),
        });
    }
    Ok(f1.iter().zip(f2).map(|(a, b)| (a + b) / 2.0).collect())
}

/// One meta-learner input row per time step. With `features`, the selected
/// meta-features are appended to every row unchanged.
pub fn stack_inputs(f1: &[f64], f2: &[f64], features: Option<(&MetaFeatureVector, [Feature; 2])>) -> Result<Vec<Vec<f64>>> {
    if f1.len() != f2.len() {
        return Err(Error::LengthMismatch {
            left: f1.len(),
            right: f2.len(),
        });
    }
    Ok(f1
        .iter()
        .zip(f2)
        .map(|(&a, &b)| {
            let mut row = vec![a, b];
            if let Some((v, pair)) = features {
                row.extend(pair.iter().map(|&f| v.get(f)));
            }
            row
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected network with a single linear output unit.
///
/// Parameters live in one flat vector; layer `l` stores its weight matrix
/// (`widths[l+1] x widths[l]`, row-major) followed by its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNetwork {
    widths: Vec<usize>,
    hidden_activation: Activation,
    params: Vec<f64>,
}

impl MlpNetwork {
    fn check_widths(widths: &[usize]) -> Result<()> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) || *widths.last().unwrap() != 1 {
            return Err(Error::InvalidArgument(format!(
                "MLP widths {widths:?} must be nonzero and end in a single output"
            )));
        }
        Ok(())
    }

    fn count(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    pub fn zeros(widths: &[usize], hidden_activation: Activation) -> Result<Self> {
        Self::check_widths(widths)?;
        Ok(Self {
            widths: widths.to_vec(),
            hidden_activation,
            params: vec![0.0; Self::count(widths)],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(widths: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(widths, Activation::Tanh)?;
        let mut offset = 0;
        for w in widths.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            for p in &mut net.params[offset..offset + n_in * n_out] {
                *p = rng.gen_range(-limit..limit);
            }
            offset += n_in * n_out + n_out;
        }
        Ok(net)
    }

    /// Builds a network from per-layer `(weights, bias)` pairs, weights
    /// row-major `out x in`.
    pub fn from_layers(layers: &[(Vec<f64>, Vec<f64>)], input_width: usize, hidden_activation: Activation) -> Result<Self> {
        let mut widths = vec![input_width];
        let mut params = Vec::new();
        for (w, b) in layers {
            let n_in = *widths.last().unwrap();
            if w.len() != b.len() * n_in {
                return Err(Error::InconsistentWidth {
                    expected: b.len() * n_in,
                    got: w.len(),
                });
            }
            widths.push(b.len());
            params.extend_from_slice(w);
            params.extend_from_slice(b);
        }
        Self::check_widths(&widths)?;
        Ok(Self {
            widths,
            hidden_activation,
            params,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// `(weights, bias)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let offset: usize = self.widths[..=l].windows(2).map(|w| w[1] * w[0] + w[1]).sum();
        let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
        let w = &self.params[offset..offset + n_in * n_out];
        let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        (w, b)
    }

    fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Forward pass keeping every layer's activations (input first).
    fn forward_trace(&self, x: &[f64], acts: &mut Vec<Vec<f64>>) -> f64 {
        acts.resize(self.widths.len(), Vec::new());
        acts[0].clear();
        acts[0].extend_from_slice(x);
        let last = self.n_layers() - 1;
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let n_in = self.widths[l];
            let (prev, rest) = acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut rest[0];
            out.clear();
            for (row, bias) in w.chunks_exact(n_in).zip(b) {
                let z = bias + row.iter().zip(input).map(|(a, v)| a * v).sum::<f64>();
                out.push(if l == last { z } else { self.hidden_activation.apply(z) });
            }
        }
        acts[self.n_layers()][0]
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_width() {
            return Err(Error::InconsistentWidth {
                expected: self.input_width(),
                got: x.len(),
            });
        }
        let mut acts = Vec::new();
        Ok(self.forward_trace(x, &mut acts))
    }

    /// Adds `d_output * d(out)/d(params)` to `grad` for the activations of
    /// the last forward pass.
    fn backward(&self, acts: &[Vec<f64>], d_output: f64, grad: &mut [f64], delta: &mut Vec<f64>, next: &mut Vec<f64>) {
        delta.clear();
        delta.push(d_output);
        let mut offset = self.params.len();
        for l in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            offset -= n_in * n_out + n_out;
            let input = &acts[l];
            let (gw, gb) = grad[offset..offset + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for (o, d) in delta.iter().enumerate() {
                gb[o] += d;
                for (g, v) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                    *g += d * v;
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[offset..offset + n_in * n_out];
            next.clear();
            next.resize(n_in, 0.0);
            for (o, d) in delta.iter().enumerate() {
                for (n, a) in next.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *n += d * a;
                }
            }
            for (n, a) in next.iter_mut().zip(input) {
                *n *= self.hidden_activation.derivative_from_output(*a);
            }
            std::mem::swap(delta, next);
        }
    }

    /// Mean absolute error over `rows` and its gradient, written to `grad`.
    pub fn loss_gradient(&self, rows: &[(&[f64], f64)], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut acts = Vec::new();
        let (mut delta, mut next) = (Vec::new(), Vec::new());
        let n = rows.len() as f64;
        let mut loss = 0.0;
        for (x, y) in rows {
            let out = self.forward_trace(x, &mut acts);
            let r = out - y;
            loss += r.abs();
            let sign = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            };
            self.backward(&acts, sign / n, grad, &mut delta, &mut next);
        }
        loss / n
    }

    /// Upper bound on the Lipschitz constant w.r.t. the Euclidean norm of the
    /// (normalised) input: product of the layers' spectral norms.
    pub fn lipschitz_bound(&self) -> f64 {
        (0..self.n_layers())
            .map(|l| {
                let (w, _) = self.layer(l);
                let m = nalgebra::DMatrix::from_row_slice(self.widths[l + 1], self.widths[l], w);
                m.singular_values().max()
            })
            .product()
    }
}

/// Per-column min-max scaling; a column with `min == max` maps to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub min: f64,
    pub max: f64,
}

impl ColumnScaling {
    pub fn apply(&self, v: f64) -> f64 {
        let range = self.max - self.min;
        if range > 0.0 {
            (v - self.min) / range
        } else {
            0.0
        }
    }

    pub fn fit(rows: &[Vec<f64>]) -> Result<Vec<ColumnScaling>> {
        let first = rows.first().ok_or(Error::EmptyInput)?;
        let width = first.len();
        let mut cols = vec![
            ColumnScaling {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
            };
            width
        ];
        for row in rows {
            if row.len() != width {
                return Err(Error::InconsistentWidth {
                    expected: width,
                    got: row.len(),
                });
            }
            for (c, &v) in cols.iter_mut().zip(row) {
                if !v.is_finite() {
                    return Err(Error::InvalidArgument("non-finite meta-learner input".into()));
                }
                c.min = c.min.min(v);
                c.max = c.max.max(v);
            }
        }
        Ok(cols)
    }
}

pub fn normalize_row(scaling: &[ColumnScaling], row: &[f64]) -> Result<Vec<f64>> {
    if row.len() != scaling.len() {
        return Err(Error::InconsistentWidth {
            expected: scaling.len(),
            got: row.len(),
        });
    }
    Ok(scaling.iter().zip(row).map(|(s, &v)| s.apply(v)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![176, 176],
            epochs: 199,
            learning_rate: 3.6e-5,
            batch_size: 32,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.iter().any(|&w| w == 0) || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("MLP widths, epochs and batch size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("MLP learning rate must be > 0".into()));
        }
        Ok(())
    }
}

/// A trained meta-learner together with its input scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaLearner {
    pub network: MlpNetwork,
    pub normalization: Vec<ColumnScaling>,
    /// Training MAE after each epoch.
    pub loss_history: Vec<f64>,
}

impl MetaLearner {
    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        self.network.forward(&normalize_row(&self.normalization, row)?)
    }
}

/// Trains an MLP on `(inputs, target)` rows with MAE loss and Adam. Inputs
/// are min-max scaled per column; samples are reshuffled every epoch.
pub fn train_meta_learner(rows: &[(Vec<f64>, f64)], config: &MlpConfig, seed: u64) -> Result<MetaLearner> {
    config.validate()?;
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    if rows.iter().any(|(_, y)| !y.is_finite()) {
        return Err(Error::InvalidArgument("non-finite meta-learner target".into()));
    }
    let inputs: Vec<Vec<f64>> = rows.iter().map(|(x, _)| x.clone()).collect();
    let normalization = ColumnScaling::fit(&inputs)?;
    let scaled: Vec<Vec<f64>> = inputs
        .iter()
        .map(|x| normalize_row(&normalization, x))
        .collect::<Result<_>>()?;

    let mut widths = vec![normalization.len()];
    widths.extend(&config.hidden);
    widths.push(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut network = MlpNetwork::glorot(&widths, &mut rng)?;
    let mut adam = Adam::new(network.params.len(), config.learning_rate);
    let mut grad = vec![0.0; network.params.len()];
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut loss_history = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&[f64], f64)> = chunk.iter().map(|&i| (scaled[i].as_slice(), rows[i].1)).collect();
            total += network.loss_gradient(&batch, &mut grad) * batch.len() as f64;
            adam.update(&mut network.params, &grad);
        }
        let epoch_loss = total / rows.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::InvalidArgument("meta-learner training diverged".into()));
        }
        loss_history.push(epoch_loss);
    }
    Ok(MetaLearner {
        network,
        normalization,
        loss_history,
    })
}

/// Everything needed to turn two base forecasts into a stacked forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleBundle {
    pub format: String,
    pub version: u32,
    pub horizon: usize,
    pub base_pair: [ModelKind; 2],
    pub feature_pair: [Feature; 2],
    /// When false the meta-learner only sees the two forecasts.
    pub feature_weighted: bool,
    pub meta_learner: MetaLearner,
}

impl EnsembleBundle {
    pub fn new(
        horizon: usize,
        base_pair: [ModelKind; 2],
        feature_pair: [Feature; 2],
        feature_weighted: bool,
        meta_learner: MetaLearner,
    ) -> Result<Self> {
        if base_pair[0] == base_pair[1] {
            return Err(Error::InvalidArgument("base pair members must differ".into()));
        }
        if feature_pair[0] == feature_pair[1] {
            return Err(Error::InvalidArgument("feature pair members must differ".into()));
        }
        let expected = if feature_weighted { 4 } else { 2 };
        if meta_learner.network.input_width() != expected || meta_learner.normalization.len() != expected {
            return Err(Error::InconsistentWidth {
                expected,
                got: meta_learner.network.input_width(),
            });
        }
        Ok(Self {
            format: BUNDLE_FORMAT.to_string(),
            version: BUNDLE_VERSION,
            horizon,
            base_pair,
            feature_pair,
            feature_weighted,
            meta_learner,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::ModelFile(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: EnsembleBundle = serde_json::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))?;
        if bundle.format != BUNDLE_FORMAT || bundle.version != BUNDLE_VERSION {
            return Err(Error::ModelFile(format!(
                "unsupported model file {} v{}",
                bundle.format, bundle.version
            )));
        }
        Self::new(
            bundle.horizon,
            bundle.base_pair,
            bundle.feature_pair,
            bundle.feature_weighted,
            bundle.meta_learner,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::UnreadableFile {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Builds the meta-learner rows for this bundle's input layout.
    pub fn rows(&self, f1: &[f64], f2: &[f64], features: &MetaFeatureVector) -> Result<Vec<Vec<f64>>> {
        stack_inputs(f1, f2, self.feature_weighted.then_some((features, self.feature_pair)))
    }
}

/// Stacked forecast, one value per step of `f1`/`f2`.
pub fn predict_ensemble(bundle: &EnsembleBundle, f1: &[f64], f2: &[f64], features: &MetaFeatureVector) -> Result<Vec<f64>> {
    bundle
        .rows(f1, f2, features)?
        .iter()
        .map(|row| bundle.meta_learner.predict_row(row))
        .collect()
}
