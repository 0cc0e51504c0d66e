//! Stacked LSTM networks with peephole connections, trained by
//! backpropagation through time.
//!
//! Each cell computes, per step:
//!
//! ```text
//! f_t = sigma(W_xf x_t + W_hf h_{t-1} + W_cf o c_{t-1} + b_f)
//! i_t = sigma(W_xi x_t + W_hi h_{t-1} + W_ci o c_{t-1} + b_i)
//! c_t = f_t o c_{t-1} + i_t o tanh(W_xc x_t + W_hc h_{t-1} + b_c)
//! o_t = sigma(W_xo x_t + W_ho h_{t-1} + W_co o c_t + b_o)
//! h_t = o_t o tanh(c_t)
//! ```
//!
//! where `o` is the element-wise product and the peephole vectors W_c*
//! act element-wise on the cell state. An input row of width `m * lag`
//! is consumed as a sequence of `lag` steps of width `m` (for combined
//! models, step t stacks the t-th lag of every scale); the final hidden
//! state of the top layer feeds a linear output head of width `m`.

mod text;
mod train;

pub use text::{read_model, write_model};
pub use train::{backward, batch_loss, train_multiscale, train_supervised, Adam, Gradients};

use crate::error::{Error, Result};
use crate::ingest::TimedSeries;
use crate::preprocess::{
    difference, difference_tails, fit_scaler, integrate_forecast, to_multiscale, to_supervised,
    ScalerKind, ScalerParams,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `y += W x` for a row-major `rows x cols` matrix.
pub(crate) fn matvec_add(w: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(y.len(), rows);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (wv, xv) in row.iter().zip(x) {
            acc += wv * xv;
        }
        y[r] += acc;
    }
}

/// `y += W^T x` for a row-major `rows x cols` matrix (`x` has length
/// `rows`, `y` length `cols`).
pub(crate) fn matvec_transpose_add(w: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), rows);
    debug_assert_eq!(y.len(), cols);
    for r in 0..rows {
        let xv = x[r];
        if xv == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (yv, wv) in y.iter_mut().zip(row) {
            *yv += xv * wv;
        }
    }
}

/// Network shape and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LstmConfig {
    /// Units per hidden layer (N).
    pub neurons: usize,
    /// Number of stacked hidden layers (H).
    pub layers: usize,
    /// Input lags per scale (I).
    pub lag: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Output heads m: 1 (separate) or 3 (combined).
    pub heads: usize,
    pub peepholes: bool,
    pub seed: u64,
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.neurons == 0
            || self.layers == 0
            || self.lag == 0
            || self.batch_size == 0
            || self.epochs == 0
        {
            return Err(Error::invalid(
                "neurons, layers, lag, batch size, and epochs must all be positive",
            ));
        }
        if self.heads != 1 && self.heads != 3 {
            return Err(Error::invalid(format!(
                "output heads must be 1 (separate) or 3 (combined), got {}",
                self.heads
            )));
        }
        Ok(())
    }

    /// Width of one full input row.
    pub fn input_width(&self) -> usize {
        self.heads * self.lag
    }
}

/// All parameters of one layer. Weight matrices are row-major with
/// shape `units x input_size` (input weights) or `units x units`
/// (recurrent weights); peephole vectors have length `units` and are
/// ignored when `peepholes` is false.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub input_size: usize,
    pub units: usize,
    pub peepholes: bool,
    pub w_xf: Vec<f64>,
    pub w_hf: Vec<f64>,
    pub w_cf: Vec<f64>,
    pub b_f: Vec<f64>,
    pub w_xi: Vec<f64>,
    pub w_hi: Vec<f64>,
    pub w_ci: Vec<f64>,
    pub b_i: Vec<f64>,
    pub w_xc: Vec<f64>,
    pub w_hc: Vec<f64>,
    pub b_c: Vec<f64>,
    pub w_xo: Vec<f64>,
    pub w_ho: Vec<f64>,
    pub w_co: Vec<f64>,
    pub b_o: Vec<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input_size: usize, units: usize, peepholes: bool) -> Self {
        LstmLayerParams {
            input_size,
            units,
            peepholes,
            w_xf: vec![0.0; units * input_size],
            w_hf: vec![0.0; units * units],
            w_cf: vec![0.0; units],
            b_f: vec![0.0; units],
            w_xi: vec![0.0; units * input_size],
            w_hi: vec![0.0; units * units],
            w_ci: vec![0.0; units],
            b_i: vec![0.0; units],
            w_xc: vec![0.0; units * input_size],
            w_hc: vec![0.0; units * units],
            b_c: vec![0.0; units],
            w_xo: vec![0.0; units * input_size],
            w_ho: vec![0.0; units * units],
            w_co: vec![0.0; units],
            b_o: vec![0.0; units],
        }
    }

    /// Fresh layer with weights uniform in [-s, s), s = 1/sqrt(fan-in)
    /// (peephole vectors have fan-in 1). The forget-gate bias starts at
    /// 1.0, other biases at 0; biases consume no random draws.
    pub fn random(input_size: usize, units: usize, peepholes: bool, rng: &mut ChaCha8Rng) -> Self {
        let mut draw = |len: usize, fan_in: usize| -> Vec<f64> {
            let s = 1.0 / (fan_in as f64).sqrt();
            (0..len).map(|_| rng.gen_range(-s..s)).collect()
        };
        let peep = |draw: &mut dyn FnMut(usize, usize) -> Vec<f64>| {
            if peepholes {
                draw(units, 1)
            } else {
                vec![0.0; units]
            }
        };
        // Draw order follows the canonical tensor order below.
        let w_xf = draw(units * input_size, input_size);
        let w_hf = draw(units * units, units);
        let w_cf = peep(&mut draw);
        let w_xi = draw(units * input_size, input_size);
        let w_hi = draw(units * units, units);
        let w_ci = peep(&mut draw);
        let w_xc = draw(units * input_size, input_size);
        let w_hc = draw(units * units, units);
        let w_xo = draw(units * input_size, input_size);
        let w_ho = draw(units * units, units);
        let w_co = peep(&mut draw);
        LstmLayerParams {
            input_size,
            units,
            peepholes,
            w_xf,
            w_hf,
            w_cf,
            b_f: vec![1.0; units],
            w_xi,
            w_hi,
            w_ci,
            b_i: vec![0.0; units],
            w_xc,
            w_hc,
            b_c: vec![0.0; units],
            w_xo,
            w_ho,
            w_co,
            b_o: vec![0.0; units],
        }
    }

    /// Tensors in canonical order; peephole vectors appear only when
    /// enabled. This order defines parameter flattening, optimizer state
    /// layout, and the serialized format.
    pub fn tensors(&self) -> Vec<(&'static str, &Vec<f64>)> {
        let mut out = vec![("w_xf", &self.w_xf), ("w_hf", &self.w_hf)];
        if self.peepholes {
            out.push(("w_cf", &self.w_cf));
        }
        out.push(("b_f", &self.b_f));
        out.push(("w_xi", &self.w_xi));
        out.push(("w_hi", &self.w_hi));
        if self.peepholes {
            out.push(("w_ci", &self.w_ci));
        }
        out.push(("b_i", &self.b_i));
        out.push(("w_xc", &self.w_xc));
        out.push(("w_hc", &self.w_hc));
        out.push(("b_c", &self.b_c));
        out.push(("w_xo", &self.w_xo));
        out.push(("w_ho", &self.w_ho));
        if self.peepholes {
            out.push(("w_co", &self.w_co));
        }
        out.push(("b_o", &self.b_o));
        out
    }

    /// Mutable view over the same tensors in the same order.
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Vec<f64>)> {
        let peepholes = self.peepholes;
        let mut out = vec![("w_xf", &mut self.w_xf), ("w_hf", &mut self.w_hf)];
        if peepholes {
            out.push(("w_cf", &mut self.w_cf));
        }
        out.push(("b_f", &mut self.b_f));
        out.push(("w_xi", &mut self.w_xi));
        out.push(("w_hi", &mut self.w_hi));
        if peepholes {
            out.push(("w_ci", &mut self.w_ci));
        }
        out.push(("b_i", &mut self.b_i));
        out.push(("w_xc", &mut self.w_xc));
        out.push(("w_hc", &mut self.w_hc));
        out.push(("b_c", &mut self.b_c));
        out.push(("w_xo", &mut self.w_xo));
        out.push(("w_ho", &mut self.w_ho));
        if peepholes {
            out.push(("w_co", &mut self.w_co));
        }
        out.push(("b_o", &mut self.b_o));
        out
    }
}

/// Recurrent state of one layer; reset to zeros at sequence boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(units: usize) -> Self {
        CellState {
            h: vec![0.0; units],
            c: vec![0.0; units],
        }
    }
}

/// Everything one forward step computes, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    /// Candidate cell value, tanh-activated.
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// One cell step with all intermediates. Shapes must already be valid.
pub(crate) fn step_full(p: &LstmLayerParams, x: &[f64], prev: &CellState) -> StepCache {
    let u = p.units;
    let gate_pre = |wx: &[f64], wh: &[f64], b: &[f64]| -> Vec<f64> {
        let mut pre = b.to_vec();
        matvec_add(wx, u, p.input_size, x, &mut pre);
        matvec_add(wh, u, u, &prev.h, &mut pre);
        pre
    };

    let mut f = gate_pre(&p.w_xf, &p.w_hf, &p.b_f);
    let mut i = gate_pre(&p.w_xi, &p.w_hi, &p.b_i);
    if p.peepholes {
        for k in 0..u {
            f[k] += p.w_cf[k] * prev.c[k];
            i[k] += p.w_ci[k] * prev.c[k];
        }
    }
    for v in f.iter_mut().chain(i.iter_mut()) {
        *v = sigmoid(*v);
    }

    let mut g = gate_pre(&p.w_xc, &p.w_hc, &p.b_c);
    for v in g.iter_mut() {
        *v = v.tanh();
    }

    let mut c = vec![0.0; u];
    for k in 0..u {
        c[k] = f[k] * prev.c[k] + i[k] * g[k];
    }

    let mut o = gate_pre(&p.w_xo, &p.w_ho, &p.b_o);
    if p.peepholes {
        for k in 0..u {
            o[k] += p.w_co[k] * c[k];
        }
    }
    for v in o.iter_mut() {
        *v = sigmoid(*v);
    }

    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = o.iter().zip(&tanh_c).map(|(ov, tv)| ov * tv).collect();

    StepCache {
        x: x.to_vec(),
        h_prev: prev.h.clone(),
        c_prev: prev.c.clone(),
        f,
        i,
        g,
        o,
        c,
        tanh_c,
        h,
    }
}

/// Advance one layer by one step.
pub fn cell_forward(params: &LstmLayerParams, x: &[f64], prev: &CellState) -> Result<CellState> {
    if x.len() != params.input_size || prev.h.len() != params.units || prev.c.len() != params.units
    {
        return Err(Error::invalid(format!(
            "shape mismatch: layer is {} inputs x {} units, got input {} and state {}/{}",
            params.input_size,
            params.units,
            x.len(),
            prev.h.len(),
            prev.c.len()
        )));
    }
    let cache = step_full(params, x, prev);
    Ok(CellState {
        h: cache.h,
        c: cache.c,
    })
}

/// Per-output-stream preprocessing the model was fitted with; inverted
/// by prediction so outputs come back in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamTransform {
    pub difference_order: usize,
    pub scaler: ScalerParams,
}

/// A complete network: stacked layers plus a linear output head, and the
/// per-stream transforms (empty when the model lives in frame space).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub config: LstmConfig,
    pub layers: Vec<LstmLayerParams>,
    /// Row-major `heads x neurons`.
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
    /// One per output stream, or empty for identity.
    pub transforms: Vec<StreamTransform>,
}

impl LstmModel {
    /// All parameters zero; useful as a gradient-shaped container.
    pub fn zeros(config: &LstmConfig) -> Result<Self> {
        config.validate()?;
        let layers = (0..config.layers)
            .map(|l| {
                let input = if l == 0 { config.heads } else { config.neurons };
                LstmLayerParams::zeros(input, config.neurons, config.peepholes)
            })
            .collect();
        Ok(LstmModel {
            config: config.clone(),
            layers,
            head_w: vec![0.0; config.heads * config.neurons],
            head_b: vec![0.0; config.heads],
            transforms: Vec::new(),
        })
    }

    /// Randomly initialized network, layers bottom-up, head last.
    pub fn random(config: &LstmConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let layers = (0..config.layers)
            .map(|l| {
                let input = if l == 0 { config.heads } else { config.neurons };
                LstmLayerParams::random(input, config.neurons, config.peepholes, rng)
            })
            .collect();
        let s = 1.0 / (config.neurons as f64).sqrt();
        let head_w = (0..config.heads * config.neurons)
            .map(|_| rng.gen_range(-s..s))
            .collect();
        Ok(LstmModel {
            config: config.clone(),
            layers,
            head_w,
            head_b: vec![0.0; config.heads],
            transforms: Vec::new(),
        })
    }

    /// Every tensor in canonical order: layers bottom-up, then the head.
    pub fn tensors(&self) -> Vec<(&'static str, &Vec<f64>)> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend(layer.tensors());
        }
        out.push(("head_w", &self.head_w));
        out.push(("head_b", &self.head_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Vec<f64>)> {
        let mut out = Vec::new();
        for layer in self.layers.iter_mut() {
            out.extend(layer.tensors_mut());
        }
        out.push(("head_w", &mut self.head_w));
        out.push(("head_b", &mut self.head_b));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Flat parameter vector in canonical order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for (_, t) in self.tensors() {
            out.extend_from_slice(t);
        }
        out
    }

    /// Overwrite every parameter from a flat vector in canonical order.
    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                flat.len()
            )));
        }
        let mut cursor = 0;
        for (_, t) in self.tensors_mut() {
            let len = t.len();
            t.copy_from_slice(&flat[cursor..cursor + len]);
            cursor += len;
        }
        Ok(())
    }

    /// Hidden units plus input and output neurons, the network-size
    /// measure used by the cost model.
    pub fn total_neurons(&self) -> usize {
        self.config.neurons * self.config.layers + self.config.input_width() + self.config.heads
    }
}

/// Run one input row through the network: `lag` steps of width `heads`,
/// states starting at zero, final top hidden state through the head.
pub fn forward(model: &LstmModel, row: &[f64]) -> Result<Vec<f64>> {
    let m = model.config.heads;
    let lag = model.config.lag;
    if row.len() != m * lag {
        return Err(Error::invalid(format!(
            "input row has width {}, model expects {} ({} steps x {} streams)",
            row.len(),
            m * lag,
            lag,
            m
        )));
    }
    let mut states: Vec<CellState> = model
        .layers
        .iter()
        .map(|l| CellState::zeros(l.units))
        .collect();
    for t in 0..lag {
        let mut input: Vec<f64> = (0..m).map(|b| row[b * lag + t]).collect();
        for (layer, state) in model.layers.iter().zip(states.iter_mut()) {
            let cache = step_full(layer, &input, state);
            input = cache.h.clone();
            *state = CellState {
                h: cache.h,
                c: cache.c,
            };
        }
    }
    let top = &states.last().expect("at least one layer").h;
    let mut y = model.head_b.clone();
    matvec_add(&model.head_w, m, model.config.neurons, top, &mut y);
    Ok(y)
}

/// Min-max scaler fit that tolerates constant series by widening the
/// range half a unit either side (the constant then maps to 0 exactly).
fn scaler_or_degenerate(values: &[f64]) -> ScalerParams {
    fit_scaler(values, ScalerKind::MinMaxSymmetric).unwrap_or_else(|_| {
        let c = values.first().copied().unwrap_or(0.0);
        ScalerParams {
            kind: ScalerKind::MinMaxSymmetric,
            min: c - 0.5,
            max: c + 0.5,
        }
    })
}

/// Difference, scale, frame, and train a single-output model on one
/// series (given in original units).
pub fn fit_series(
    series: &[f64],
    config: &LstmConfig,
    difference_order: usize,
) -> Result<LstmModel> {
    if config.heads != 1 {
        return Err(Error::invalid(
            "single-series fitting requires a 1-output configuration",
        ));
    }
    let (diffed, _) = difference(series, difference_order)?;
    let scaler = scaler_or_degenerate(&diffed);
    let scaled = scaler.apply_slice(&diffed)?;
    let frame = to_supervised(&scaled, config.lag)?;
    let mut model = train_supervised(&frame, config)?;
    model.transforms = vec![StreamTransform {
        difference_order,
        scaler,
    }];
    Ok(model)
}

/// Difference and scale each scale's series independently, frame them on
/// the common 60-minute grid, and train a combined 3-output model.
pub fn fit_multiscale(
    s15: &TimedSeries,
    s30: &TimedSeries,
    s60: &TimedSeries,
    config: &LstmConfig,
    difference_order: usize,
) -> Result<LstmModel> {
    if config.heads != 3 {
        return Err(Error::invalid(
            "multiscale fitting requires a 3-output configuration",
        ));
    }
    let mut transformed = Vec::with_capacity(3);
    let mut transforms = Vec::with_capacity(3);
    for s in [s15, s30, s60] {
        let (diffed, _) = difference(&s.values, difference_order)?;
        let scaler = scaler_or_degenerate(&diffed);
        let scaled = scaler.apply_slice(&diffed)?;
        transformed.push(TimedSeries {
            start: s.start + difference_order as i64 * s.step_seconds,
            step_seconds: s.step_seconds,
            values: scaled,
        });
        transforms.push(StreamTransform {
            difference_order,
            scaler,
        });
    }
    let frame = to_multiscale(&transformed[0], &transformed[1], &transformed[2], config.lag)?;
    let mut model = train_multiscale(&frame, config)?;
    model.transforms = transforms;
    Ok(model)
}

/// The transform for output stream `idx`, or None for identity models.
fn stream_transform(model: &LstmModel, idx: usize) -> Result<Option<&StreamTransform>> {
    if model.transforms.is_empty() {
        return Ok(None);
    }
    if model.transforms.len() != model.config.heads {
        return Err(Error::invalid(format!(
            "model carries {} transforms for {} output streams",
            model.transforms.len(),
            model.config.heads
        )));
    }
    Ok(Some(&model.transforms[idx]))
}

/// Prepare one stream's iterated-prediction state: the scaled differenced
/// history buffer, the integration tails, and the scaler to invert.
fn stream_buffer<'m>(
    model: &'m LstmModel,
    idx: usize,
    history: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Option<&'m ScalerParams>)> {
    let (buffer, tails, scaler) = match stream_transform(model, idx)? {
        None => (history.to_vec(), Vec::new(), None),
        Some(tr) => {
            let tails = difference_tails(history, tr.difference_order)?;
            let (diffed, _) = difference(history, tr.difference_order)?;
            (tr.scaler.apply_slice(&diffed)?, tails, Some(&tr.scaler))
        }
    };
    if buffer.len() < model.config.lag {
        return Err(Error::invalid(format!(
            "{} usable observations cannot fill a lag window of {}",
            buffer.len(),
            model.config.lag
        )));
    }
    Ok((buffer, tails, scaler))
}

/// Invert scaling and differencing for one stream's predictions, then
/// clamp at zero (occupancy cannot be negative).
fn finish_stream(scaled: &[f64], mut tails: Vec<f64>, scaler: Option<&ScalerParams>) -> Vec<f64> {
    let mut out = match scaler {
        Some(s) => s.invert_slice(scaled),
        None => scaled.to_vec(),
    };
    if !tails.is_empty() {
        out = integrate_forecast(&out, &mut tails);
    }
    out.into_iter().map(|v| v.max(0.0)).collect()
}

/// Iterated one-step prediction for a single-output model. `history` is
/// in original units; so is the returned sequence.
pub fn predict_series(model: &LstmModel, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
    if model.config.heads != 1 {
        return Err(Error::invalid(
            "single-series prediction requires a 1-output model",
        ));
    }
    let (mut buffer, tails, scaler) = stream_buffer(model, 0, history)?;
    let lag = model.config.lag;
    let mut scaled_preds = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let row = buffer[buffer.len() - lag..].to_vec();
        let y = forward(model, &row)?;
        buffer.push(y[0]);
        scaled_preds.push(y[0]);
    }
    Ok(finish_stream(&scaled_preds, tails, scaler))
}

/// Iterated prediction for a combined model: every step advances all
/// three scales by one observation each, appending each prediction to
/// its own scale's timeline. Returns one sequence per scale, in
/// original units, in [15, 30, 60] order.
pub fn predict_multiscale(
    model: &LstmModel,
    h15: &[f64],
    h30: &[f64],
    h60: &[f64],
    horizon: usize,
) -> Result<Vec<Vec<f64>>> {
    if model.config.heads != 3 {
        return Err(Error::invalid(
            "multiscale prediction requires a 3-output model",
        ));
    }
    let lag = model.config.lag;
    let mut buffers = Vec::with_capacity(3);
    let mut tails = Vec::with_capacity(3);
    let mut scalers = Vec::with_capacity(3);
    for (idx, history) in [h15, h30, h60].into_iter().enumerate() {
        let (buffer, tail, scaler) = stream_buffer(model, idx, history)?;
        buffers.push(buffer);
        tails.push(tail);
        scalers.push(scaler);
    }
    let mut scaled_preds: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(horizon)).collect();
    for _ in 0..horizon {
        let mut row = Vec::with_capacity(3 * lag);
        for buffer in &buffers {
            row.extend_from_slice(&buffer[buffer.len() - lag..]);
        }
        let y = forward(model, &row)?;
        for (j, &v) in y.iter().enumerate() {
            buffers[j].push(v);
            scaled_preds[j].push(v);
        }
    }
    Ok(scaled_preds
        .iter()
        .zip(tails)
        .zip(scalers)
        .map(|((scaled, tail), scaler)| finish_stream(scaled, tail, scaler))
        .collect())
}
