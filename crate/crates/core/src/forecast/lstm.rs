//! Stacked peephole LSTM regressor trained with backpropagation through time.
//!
//! Per layer and time step, with gates ordered (i, f, g, o) in every 4h block:
//!
//! ```text
//! i = σ(W_ix x + W_im m' + w_ic ⊙ c' + b_i)
//! f = σ(W_fx x + W_fm m' + w_fc ⊙ c' + b_f)
//! c = f ⊙ c' + i ⊙ tanh(W_cx x + W_cm m' + b_c)
//! o = σ(W_ox x + W_om m' + w_oc ⊙ c + b_o)
//! m = o ⊙ tanh(c)
//! ```
//!
//! The top layer's final `m` feeds a linear head `y = w_y · m + b_y`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::Adam;

use super::{check_horizon, Forecast};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub widths: Vec<usize>,
    pub seq_len: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            widths: vec![192, 384, 384],
            seq_len: 8,
            batch_size: 4,
            epochs: 110,
            learning_rate: 1e-5,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::InvalidArgument("LSTM widths must be non-empty and positive".into()));
        }
        if self.seq_len == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("LSTM seq_len and batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("LSTM learning rate must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct LayerLayout {
    n_in: usize,
    hidden: usize,
    wx: usize,
    wm: usize,
    peep: usize,
    bias: usize,
}

impl LayerLayout {
    fn end(&self) -> usize {
        self.bias + 4 * self.hidden
    }
}

/// Weights of the stacked network in one flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmNetwork {
    widths: Vec<usize>,
    layers: Vec<LayerLayout>,
    head_w: usize,
    head_b: usize,
    params: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
struct LayerTrace {
    /// Activated gates per step, `T x 4h`.
    gates: Vec<f64>,
    /// Cell states, `(T+1) x h`; row 0 is the zero initial state.
    c: Vec<f64>,
    /// `tanh(c)` per step, `T x h`.
    tc: Vec<f64>,
    /// Outputs, `(T+1) x h`; row 0 is the zero initial state.
    m: Vec<f64>,
}

/// Scratch buffers reused across forward/backward passes.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    layers: Vec<LayerTrace>,
    dm_in: Vec<f64>,
    dx: Vec<f64>,
    dpre: Vec<f64>,
    dm_rec: Vec<f64>,
    dc_next: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four independent accumulators so the loop vectorises
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl LstmNetwork {
    /// Zero-initialised network with scalar input.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.is_empty() || widths.contains(&0) {
            return Err(Error::InvalidArgument("LSTM widths must be non-empty and positive".into()));
        }
        let mut layers = Vec::with_capacity(widths.len());
        let mut offset = 0;
        let mut n_in = 1;
        for &h in widths {
            let wx = offset;
            let wm = wx + 4 * h * n_in;
            let peep = wm + 4 * h * h;
            let bias = peep + 3 * h;
            let layer = LayerLayout {
                n_in,
                hidden: h,
                wx,
                wm,
                peep,
                bias,
            };
            offset = layer.end();
            layers.push(layer);
            n_in = h;
        }
        let head_w = offset;
        let head_b = head_w + n_in;
        Ok(Self {
            widths: widths.to_vec(),
            layers,
            head_w,
            head_b,
            params: vec![0.0; head_b + 1],
        })
    }

    /// Uniform `±1/sqrt(fan_in)` initialisation.
    pub fn random(widths: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        for layer in net.layers.clone() {
            let bound = 1.0 / ((layer.n_in + layer.hidden) as f64).sqrt();
            for p in &mut net.params[layer.wx..layer.end()] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        let top = *widths.last().expect("non-empty widths");
        let bound = 1.0 / (top as f64).sqrt();
        for p in &mut net.params[net.head_w..=net.head_b] {
            *p = rng.gen_range(-bound..bound);
        }
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Sets the output bias `b_y`.
    pub fn set_output_bias(&mut self, value: f64) {
        self.params[self.head_b] = value;
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            layers: vec![LayerTrace::default(); self.layers.len()],
            ..Workspace::default()
        }
    }

    /// Runs the sequence and returns the head output.
    pub fn forward(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        let steps = x.len();
        if ws.layers.len() != self.layers.len() {
            *ws = self.workspace();
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let (below, rest) = ws.layers.split_at_mut(l);
            let trace = &mut rest[0];
            let h = layer.hidden;
            trace.gates.resize(steps * 4 * h, 0.0);
            trace.c.clear();
            trace.c.resize((steps + 1) * h, 0.0);
            trace.tc.resize(steps * h, 0.0);
            trace.m.clear();
            trace.m.resize((steps + 1) * h, 0.0);

            let p = &self.params;
            let wx = &p[layer.wx..layer.wm];
            let wm = &p[layer.wm..layer.peep];
            let peep = &p[layer.peep..layer.bias];
            let bias = &p[layer.bias..layer.end()];
            for t in 0..steps {
                let input: &[f64] = if l == 0 {
                    &x[t..t + 1]
                } else {
                    let hp = below[l - 1].m.len() / (steps + 1);
                    &below[l - 1].m[(t + 1) * hp..(t + 2) * hp]
                };
                let (m_hist, m_next) = trace.m.split_at_mut((t + 1) * h);
                let m_prev = &m_hist[t * h..];
                let gates = &mut trace.gates[t * 4 * h..(t + 1) * 4 * h];
                for r in 0..4 * h {
                    gates[r] = bias[r]
                        + dot(&wx[r * layer.n_in..(r + 1) * layer.n_in], input)
                        + dot(&wm[r * h..(r + 1) * h], m_prev);
                }
                let (c_hist, c_next) = trace.c.split_at_mut((t + 1) * h);
                let c_prev = &c_hist[t * h..];
                for j in 0..h {
                    let i = sigmoid(gates[j] + peep[j] * c_prev[j]);
                    let f = sigmoid(gates[h + j] + peep[h + j] * c_prev[j]);
                    let g = gates[2 * h + j].tanh();
                    let c = f * c_prev[j] + i * g;
                    let o = sigmoid(gates[3 * h + j] + peep[2 * h + j] * c);
                    let tc = c.tanh();
                    gates[j] = i;
                    gates[h + j] = f;
                    gates[2 * h + j] = g;
                    gates[3 * h + j] = o;
                    c_next[j] = c;
                    trace.tc[t * h + j] = tc;
                    m_next[j] = o * tc;
                }
            }
        }
        let top = ws.layers.last().expect("at least one layer");
        let h = self.layers.last().expect("at least one layer").hidden;
        let m_last = &top.m[steps * h..(steps + 1) * h];
        dot(&self.params[self.head_w..self.head_b], m_last) + self.params[self.head_b]
    }

    /// Accumulates `d_output * d(output)/d(params)` into `grad` using the
    /// trace left in `ws` by the preceding [`forward`](Self::forward) call.
    pub fn backward(&self, x: &[f64], ws: &mut Workspace, d_output: f64, grad: &mut [f64]) {
        let steps = x.len();
        let top_h = self.layers.last().expect("at least one layer").hidden;
        {
            let top = ws.layers.last().expect("at least one layer");
            let m_last = &top.m[steps * top_h..(steps + 1) * top_h];
            axpy(d_output, m_last, &mut grad[self.head_w..self.head_b]);
            grad[self.head_b] += d_output;
        }
        ws.dm_in.clear();
        ws.dm_in.resize(steps * top_h, 0.0);
        for j in 0..top_h {
            ws.dm_in[(steps - 1) * top_h + j] = d_output * self.params[self.head_w + j];
        }

        for l in (0..self.layers.len()).rev() {
            let layer = self.layers[l];
            let h = layer.hidden;
            let n_in = layer.n_in;
            let p = &self.params;
            let wx = &p[layer.wx..layer.wm];
            let wm = &p[layer.wm..layer.peep];
            let peep = &p[layer.peep..layer.bias];

            ws.dx.clear();
            ws.dx.resize(steps * n_in, 0.0);
            ws.dpre.resize(4 * h, 0.0);
            ws.dm_rec.clear();
            ws.dm_rec.resize(h, 0.0);
            ws.dc_next.clear();
            ws.dc_next.resize(h, 0.0);

            let (below, rest) = ws.layers.split_at(l);
            let trace = &rest[0];
            for t in (0..steps).rev() {
                let gates = &trace.gates[t * 4 * h..(t + 1) * 4 * h];
                let c_prev = &trace.c[t * h..(t + 1) * h];
                let c_cur = &trace.c[(t + 1) * h..(t + 2) * h];
                let tcs = &trace.tc[t * h..(t + 1) * h];
                for j in 0..h {
                    let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                    let tc = tcs[j];
                    let dm = ws.dm_in[t * h + j] + ws.dm_rec[j];
                    let dpre_o = dm * tc * o * (1.0 - o);
                    let dc = ws.dc_next[j] + dm * o * (1.0 - tc * tc) + dpre_o * peep[2 * h + j];
                    let dpre_g = dc * i * (1.0 - g * g);
                    let dpre_i = dc * g * i * (1.0 - i);
                    let dpre_f = dc * c_prev[j] * f * (1.0 - f);
                    ws.dc_next[j] = dc * f + dpre_i * peep[j] + dpre_f * peep[h + j];
                    ws.dpre[j] = dpre_i;
                    ws.dpre[h + j] = dpre_f;
                    ws.dpre[2 * h + j] = dpre_g;
                    ws.dpre[3 * h + j] = dpre_o;
                    grad[layer.peep + j] += dpre_i * c_prev[j];
                    grad[layer.peep + h + j] += dpre_f * c_prev[j];
                    grad[layer.peep + 2 * h + j] += dpre_o * c_cur[j];
                }
                let input: &[f64] = if l == 0 {
                    &x[t..t + 1]
                } else {
                    let hp = below[l - 1].m.len() / (steps + 1);
                    &below[l - 1].m[(t + 1) * hp..(t + 2) * hp]
                };
                let m_prev = &trace.m[t * h..(t + 1) * h];
                ws.dm_rec.iter_mut().for_each(|v| *v = 0.0);
                let dx_t = &mut ws.dx[t * n_in..(t + 1) * n_in];
                for r in 0..4 * h {
                    let d = ws.dpre[r];
                    if d == 0.0 {
                        continue;
                    }
                    grad[layer.bias + r] += d;
                    axpy(d, input, &mut grad[layer.wx + r * n_in..layer.wx + (r + 1) * n_in]);
                    axpy(d, m_prev, &mut grad[layer.wm + r * h..layer.wm + (r + 1) * h]);
                    axpy(d, &wm[r * h..(r + 1) * h], &mut ws.dm_rec);
                    if l > 0 {
                        axpy(d, &wx[r * n_in..(r + 1) * n_in], dx_t);
                    }
                }
            }
            if l > 0 {
                std::mem::swap(&mut ws.dm_in, &mut ws.dx);
            }
        }
    }

    /// Squared-error loss `(y - target)^2` and its gradient.
    pub fn loss_gradient(&self, x: &[f64], target: f64) -> (f64, Vec<f64>) {
        let mut ws = self.workspace();
        let y = self.forward(x, &mut ws);
        let mut grad = vec![0.0; self.params.len()];
        self.backward(x, &mut ws, 2.0 * (y - target), &mut grad);
        ((y - target).powi(2), grad)
    }

    pub fn predict_one(&self, x: &[f64]) -> f64 {
        let mut ws = self.workspace();
        self.forward(x, &mut ws)
    }

    /// Sigmoid gate activations (i, f, o) of every layer and step.
    pub fn gate_activations(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = self.workspace();
        self.forward(x, &mut ws);
        let mut out = Vec::new();
        for (trace, layer) in ws.layers.iter().zip(&self.layers) {
            let h = layer.hidden;
            for t in 0..x.len() {
                let g = &trace.gates[t * 4 * h..(t + 1) * 4 * h];
                out.extend_from_slice(&g[..2 * h]);
                out.extend_from_slice(&g[3 * h..]);
            }
        }
        out
    }

    /// Cell states of every layer after each step.
    pub fn cell_states(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = self.workspace();
        self.forward(x, &mut ws);
        ws.layers
            .iter()
            .zip(&self.layers)
            .flat_map(|(t, l)| t.c[l.hidden..].to_vec())
            .collect()
    }
}

/// A trained network plus the min-max scaling of its training window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmForecaster {
    network: LstmNetwork,
    min: f64,
    range: f64,
    /// Last `seq_len` normalised training values.
    tail: Vec<f64>,
    final_loss: f64,
}

impl LstmForecaster {
    pub fn network(&self) -> &LstmNetwork {
        &self.network
    }

    pub fn final_loss(&self) -> f64 {
        self.final_loss
    }

    fn denormalize(&self, v: f64) -> f64 {
        self.min + v * self.range
    }
}

impl Forecast for LstmForecaster {
    fn predict(&self, horizon: usize) -> Result<Vec<f64>> {
        check_horizon(horizon)?;
        let mut ws = self.network.workspace();
        let mut window = self.tail.clone();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let y = self.network.forward(&window, &mut ws);
            out.push(self.denormalize(y));
            window.remove(0);
            window.push(y);
        }
        Ok(out)
    }
}

/// Trains on sliding `(seq_len values -> next value)` pairs of the min-max
/// normalised window, with mini-batch Adam on the mean squared error.
/// Sample order is reshuffled every epoch from `seed`.
pub fn fit_lstm(train: &[f64], config: &LstmConfig, seed: u64) -> Result<LstmForecaster> {
    config.validate()?;
    let seq = config.seq_len;
    if train.len() < seq + 1 {
        return Err(Error::TooShort {
            needed: seq + 1,
            got: train.len(),
        });
    }
    if train.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite training value".into()));
    }
    let min = train.iter().copied().fold(f64::INFINITY, f64::min);
    let max = train.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let norm: Vec<f64> = train
        .iter()
        .map(|v| if range > 0.0 { (v - min) / range } else { 0.0 })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut network = LstmNetwork::random(&config.widths, &mut rng)?;
    let mut adam = Adam::new(network.n_params(), config.learning_rate);
    let mut grad = vec![0.0; network.n_params()];
    let mut ws = network.workspace();
    let mut order: Vec<usize> = (0..norm.len() - seq).collect();
    let mut final_loss = f64::NAN;

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &start in batch {
                let x = &norm[start..start + seq];
                let target = norm[start + seq];
                let y = network.forward(x, &mut ws);
                epoch_loss += (y - target).powi(2);
                network.backward(x, &mut ws, 2.0 * (y - target) * scale, &mut grad);
            }
            adam.update(network.params_mut(), &grad);
        }
        final_loss = epoch_loss / order.len() as f64;
        if !final_loss.is_finite() {
            return Err(Error::InvalidArgument("LSTM training diverged".into()));
        }
    }
    let tail = norm[norm.len() - seq..].to_vec();
    Ok(LstmForecaster {
        network,
        min,
        range,
        tail,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (LstmNetwork, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = LstmNetwork::random(&[4, 4], &mut rng).unwrap();
        // larger weights exercise the nonlinearities
        for p in net.params_mut() {
            *p *= 2.0;
        }
        (net, vec![0.1, 0.5, -0.3, 0.8, 0.2, 0.9])
    }

    #[test]
    fn zero_weights_output_bias() {
        let mut net = LstmNetwork::zeros(&[3, 5]).unwrap();
        net.set_output_bias(0.75);
        assert_eq!(net.predict_one(&[1.0, -2.0, 3.0]), 0.75);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (net, x) = toy();
        let target = 0.3;
        let (_, grad) = net.loss_gradient(&x, target);
        let step = 1e-4;
        let mut worst: f64 = 0.0;
        for k in 0..net.n_params() {
            let mut plus = net.clone();
            plus.params_mut()[k] += step;
            let mut minus = net.clone();
            minus.params_mut()[k] -= step;
            let lp = (plus.predict_one(&x) - target).powi(2);
            let lm = (minus.predict_one(&x) - target).powi(2);
            let numeric = (lp - lm) / (2.0 * step);
            let rel = (numeric - grad[k]).abs() / numeric.abs().max(grad[k].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-3, "worst relative error {worst}");
    }

    #[test]
    fn gates_in_unit_interval_and_states_finite() {
        let (net, x) = toy();
        assert!(net.gate_activations(&x).iter().all(|g| *g > 0.0 && *g < 1.0));
        assert!(net.cell_states(&x).iter().all(|c| c.is_finite()));
        assert_eq!(net.predict_one(&x).to_bits(), net.predict_one(&x).to_bits());
    }

    #[test]
    fn fit_is_seed_reproducible() {
        let y: Vec<f64> = (0..30).map(|t| (t as f64 * 0.3).sin() + t as f64 * 0.1).collect();
        let cfg = LstmConfig {
            widths: vec![6, 6],
            epochs: 5,
            ..LstmConfig::default()
        };
        let a = fit_lstm(&y, &cfg, 9).unwrap();
        let b = fit_lstm(&y, &cfg, 9).unwrap();
        assert_eq!(a, b);
        let c = fit_lstm(&y, &cfg, 10).unwrap();
        assert_ne!(a.network().params(), c.network().params());
    }

    #[test]
    fn constant_series_predicted_exactly() {
        let cfg = LstmConfig {
            widths: vec![8, 8],
            ..LstmConfig::default()
        };
        let m = fit_lstm(&[12.5; 30], &cfg, 1).unwrap();
        assert!(m.predict(7).unwrap().iter().all(|v| (v - 12.5).abs() <= 0.05 * 12.5));
    }

    #[test]
    fn learns_with_a_usable_learning_rate() {
        let y: Vec<f64> = (0..40).map(|t| (t as f64 * 0.4).sin()).collect();
        let cfg = LstmConfig {
            widths: vec![8],
            epochs: 200,
            learning_rate: 1e-2,
            ..LstmConfig::default()
        };
        let short = fit_lstm(&y, &LstmConfig { epochs: 1, ..cfg.clone() }, 2).unwrap();
        let long = fit_lstm(&y, &cfg, 2).unwrap();
        assert!(long.final_loss() < 0.5 * short.final_loss());
    }

    #[test]
    fn rejects_short_input() {
        assert!(fit_lstm(&[1.0; 8], &LstmConfig::default(), 0).is_err());
        assert!(LstmConfig { widths: vec![], ..LstmConfig::default() }.validate().is_err());
    }
}
