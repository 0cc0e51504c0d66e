//! Training: backpropagation through time, adaptive-moment updates, and
//! the epoch/batch loop.

use super::{
    matvec_add, matvec_transpose_add, step_full, CellState, LstmConfig, LstmLayerParams,
    LstmModel, StepCache,
};
use crate::error::{Error, Result};
use crate::preprocess::{MultiScaleFrame, SupervisedFrame};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Loss gradients for every parameter, in the model's tensor layout.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LstmLayerParams>,
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &LstmModel) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| LstmLayerParams::zeros(l.input_size, l.units, l.peepholes))
                .collect(),
            head_w: vec![0.0; model.head_w.len()],
            head_b: vec![0.0; model.head_b.len()],
        }
    }

    /// Same canonical tensor order as [`LstmModel::tensors`].
    pub fn tensors(&self) -> Vec<(&'static str, &Vec<f64>)> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend(layer.tensors());
        }
        out.push(("head_w", &self.head_w));
        out.push(("head_b", &self.head_b));
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (_, t) in self.tensors() {
            out.extend_from_slice(t);
        }
        out
    }
}

/// Forward pass keeping every intermediate for backpropagation.
fn forward_cached(model: &LstmModel, row: &[f64]) -> Result<(Vec<Vec<StepCache>>, Vec<f64>)> {
    let m = model.config.heads;
    let lag = model.config.lag;
    if row.len() != m * lag {
        return Err(Error::invalid(format!(
            "input row has width {}, model expects {}",
            row.len(),
            m * lag
        )));
    }
    let mut caches: Vec<Vec<StepCache>> = model
        .layers
        .iter()
        .map(|_| Vec::with_capacity(lag))
        .collect();
    let mut states: Vec<CellState> = model
        .layers
        .iter()
        .map(|l| CellState::zeros(l.units))
        .collect();
    for t in 0..lag {
        let mut input: Vec<f64> = (0..m).map(|b| row[b * lag + t]).collect();
        for (l, layer) in model.layers.iter().enumerate() {
            let cache = step_full(layer, &input, &states[l]);
            states[l] = CellState {
                h: cache.h.clone(),
                c: cache.c.clone(),
            };
            input = cache.h.clone();
            caches[l].push(cache);
        }
    }
    let top_h = &states.last().expect("at least one layer").h;
    let mut y = model.head_b.clone();
    matvec_add(&model.head_w, m, model.config.neurons, top_h, &mut y);
    Ok((caches, y))
}

/// Accumulate one row's gradients, given the loss gradient at the head
/// output. Time runs backward; layers are peeled top to bottom, each
/// layer handing its input gradients down as the hidden-state gradients
/// of the layer below.
fn backward_row(model: &LstmModel, caches: &[Vec<StepCache>], dy: &[f64], grads: &mut Gradients) {
    let n = model.config.neurons;
    let m = model.config.heads;
    let lag = model.config.lag;
    let top = model.layers.len() - 1;

    let top_h = &caches[top][lag - 1].h;
    for (j, &dyj) in dy.iter().enumerate() {
        grads.head_b[j] += dyj;
        for (u, &h) in top_h.iter().enumerate() {
            grads.head_w[j * n + u] += dyj * h;
        }
    }
    let mut dh_top = vec![0.0; n];
    matvec_transpose_add(&model.head_w, m, n, dy, &mut dh_top);

    // Gradient arriving at each step's hidden output from above; only the
    // final step of the top layer sees the head.
    let mut dh_above: Vec<Vec<f64>> = vec![vec![0.0; n]; lag];
    dh_above[lag - 1] = dh_top;

    for l in (0..=top).rev() {
        let layer = &model.layers[l];
        let g = &mut grads.layers[l];
        let inp = layer.input_size;
        let mut dx_below: Vec<Vec<f64>> = if l > 0 {
            vec![vec![0.0; inp]; lag]
        } else {
            Vec::new()
        };
        let mut dh_carry = vec![0.0; n];
        let mut dc_carry = vec![0.0; n];

        for t in (0..lag).rev() {
            let sc = &caches[l][t];
            let mut dh = dh_above[t].clone();
            for (a, b) in dh.iter_mut().zip(&dh_carry) {
                *a += b;
            }

            // The output gate sees c_t through its peephole, so its
            // pre-activation gradient must exist before dc is assembled.
            let mut dao = vec![0.0; n];
            for u in 0..n {
                dao[u] = dh[u] * sc.tanh_c[u] * sc.o[u] * (1.0 - sc.o[u]);
            }
            let mut dc = vec![0.0; n];
            for u in 0..n {
                dc[u] = dh[u] * sc.o[u] * (1.0 - sc.tanh_c[u] * sc.tanh_c[u]) + dc_carry[u];
                if layer.peepholes {
                    dc[u] += layer.w_co[u] * dao[u];
                }
            }
            let mut daf = vec![0.0; n];
            let mut dai = vec![0.0; n];
            let mut dag = vec![0.0; n];
            for u in 0..n {
                daf[u] = dc[u] * sc.c_prev[u] * sc.f[u] * (1.0 - sc.f[u]);
                dai[u] = dc[u] * sc.g[u] * sc.i[u] * (1.0 - sc.i[u]);
                dag[u] = dc[u] * sc.i[u] * (1.0 - sc.g[u] * sc.g[u]);
            }

            // Carries into step t-1: through the forget path and the
            // f/i peepholes, which read c_{t-1}.
            for u in 0..n {
                dc_carry[u] = dc[u] * sc.f[u];
                if layer.peepholes {
                    dc_carry[u] += layer.w_cf[u] * daf[u] + layer.w_ci[u] * dai[u];
                }
            }
            dh_carry = vec![0.0; n];
            matvec_transpose_add(&layer.w_hf, n, n, &daf, &mut dh_carry);
            matvec_transpose_add(&layer.w_hi, n, n, &dai, &mut dh_carry);
            matvec_transpose_add(&layer.w_hc, n, n, &dag, &mut dh_carry);
            matvec_transpose_add(&layer.w_ho, n, n, &dao, &mut dh_carry);
            if l > 0 {
                let dx = &mut dx_below[t];
                matvec_transpose_add(&layer.w_xf, n, inp, &daf, dx);
                matvec_transpose_add(&layer.w_xi, n, inp, &dai, dx);
                matvec_transpose_add(&layer.w_xc, n, inp, &dag, dx);
                matvec_transpose_add(&layer.w_xo, n, inp, &dao, dx);
            }

            for u in 0..n {
                for k in 0..inp {
                    g.w_xf[u * inp + k] += daf[u] * sc.x[k];
                    g.w_xi[u * inp + k] += dai[u] * sc.x[k];
                    g.w_xc[u * inp + k] += dag[u] * sc.x[k];
                    g.w_xo[u * inp + k] += dao[u] * sc.x[k];
                }
                for k in 0..n {
                    g.w_hf[u * n + k] += daf[u] * sc.h_prev[k];
                    g.w_hi[u * n + k] += dai[u] * sc.h_prev[k];
                    g.w_hc[u * n + k] += dag[u] * sc.h_prev[k];
                    g.w_ho[u * n + k] += dao[u] * sc.h_prev[k];
                }
                g.b_f[u] += daf[u];
                g.b_i[u] += dai[u];
                g.b_c[u] += dag[u];
                g.b_o[u] += dao[u];
                if layer.peepholes {
                    g.w_cf[u] += daf[u] * sc.c_prev[u];
                    g.w_ci[u] += dai[u] * sc.c_prev[u];
                    g.w_co[u] += dao[u] * sc.c[u];
                }
            }
        }
        if l > 0 {
            dh_above = dx_below;
        }
    }
}

/// Mean squared error of the model over a batch, averaged over rows and
/// output streams.
pub fn batch_loss(model: &LstmModel, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    validate_batch(model, inputs, targets)?;
    let denom = (inputs.len() * model.config.heads) as f64;
    let mut loss = 0.0;
    for (row, target) in inputs.iter().zip(targets) {
        let y = super::forward(model, row)?;
        for (a, b) in y.iter().zip(target) {
            loss += (a - b) * (a - b) / denom;
        }
    }
    Ok(loss)
}

fn validate_batch(model: &LstmModel, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::invalid("batch has no rows"));
    }
    if inputs.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} input rows but {} target rows",
            inputs.len(),
            targets.len()
        )));
    }
    let m = model.config.heads;
    if let Some(t) = targets.iter().find(|t| t.len() != m) {
        return Err(Error::invalid(format!(
            "target width {} does not match {m} output streams",
            t.len()
        )));
    }
    Ok(())
}

/// Gradients of the batch-mean squared error with respect to every
/// parameter, and the loss itself.
pub fn backward(
    model: &LstmModel,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<(Gradients, f64)> {
    validate_batch(model, inputs, targets)?;
    let m = model.config.heads;
    let denom = (inputs.len() * m) as f64;
    let mut grads = Gradients::zeros_like(model);
    let mut loss = 0.0;
    for (row, target) in inputs.iter().zip(targets) {
        let (caches, y) = forward_cached(model, row)?;
        let mut dy = vec![0.0; m];
        for j in 0..m {
            let err = y[j] - target[j];
            loss += err * err / denom;
            dy[j] = 2.0 * err / denom;
        }
        backward_row(model, &caches, &dy, &mut grads);
    }
    if !loss.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite training loss {loss}"
        )));
    }
    Ok((grads, loss))
}

/// Adaptive moment estimation over the model's flattened parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    timestep: usize,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(parameter_count: usize) -> Self {
        Adam {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            timestep: 0,
            m: vec![0.0; parameter_count],
            v: vec![0.0; parameter_count],
        }
    }

    /// One bias-corrected update in place.
    pub fn step(&mut self, model: &mut LstmModel, grads: &Gradients) -> Result<()> {
        self.timestep += 1;
        let bc1 = 1.0 - self.beta1.powi(self.timestep as i32);
        let bc2 = 1.0 - self.beta2.powi(self.timestep as i32);
        let mut cursor = 0;
        for ((_, param), (_, grad)) in model.tensors_mut().into_iter().zip(grads.tensors()) {
            if param.len() != grad.len() {
                return Err(Error::invalid(
                    "gradient tensor shapes do not match the model",
                ));
            }
            for (p, &g) in param.iter_mut().zip(grad) {
                let m = &mut self.m[cursor];
                let v = &mut self.v[cursor];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= self.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + self.epsilon);
                cursor += 1;
            }
        }
        if cursor != self.m.len() {
            return Err(Error::invalid(format!(
                "optimizer tracks {} parameters, model has {cursor}",
                self.m.len()
            )));
        }
        Ok(())
    }
}

/// Shared training loop over prepared rows.
fn train_rows(inputs: &[Vec<f64>], targets: &[Vec<f64>], config: &LstmConfig) -> Result<LstmModel> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(Error::invalid("training frame has no rows"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = LstmModel::random(config, &mut rng)?;
    let mut adam = Adam::new(model.parameter_count());
    let mut order: Vec<usize> = (0..inputs.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch_inputs: Vec<Vec<f64>> = chunk.iter().map(|&r| inputs[r].clone()).collect();
            let batch_targets: Vec<Vec<f64>> = chunk.iter().map(|&r| targets[r].clone()).collect();
            let (grads, _) = match backward(&model, &batch_inputs, &batch_targets) {
                Ok(out) => out,
                Err(Error::Numerical(_)) => {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: batch_idx,
                    })
                }
                Err(e) => return Err(e),
            };
            adam.step(&mut model, &grads)?;
        }
    }
    Ok(model)
}

/// Train a single-output model on a lagged frame. Deterministic for a
/// fixed config seed; runs exactly `epochs` epochs with per-epoch
/// reshuffling; states reset on every row.
pub fn train_supervised(frame: &SupervisedFrame, config: &LstmConfig) -> Result<LstmModel> {
    if config.heads != 1 {
        return Err(Error::invalid(
            "single-scale frames train 1-output models only",
        ));
    }
    if frame.lag != config.lag {
        return Err(Error::invalid(format!(
            "frame lag {} does not match configured lag {}",
            frame.lag, config.lag
        )));
    }
    let targets: Vec<Vec<f64>> = frame.targets.iter().map(|&t| vec![t]).collect();
    train_rows(&frame.inputs, &targets, config)
}

/// Train a combined 3-output model on a multiscale frame.
pub fn train_multiscale(frame: &MultiScaleFrame, config: &LstmConfig) -> Result<LstmModel> {
    if config.heads != 3 || frame.scales != 3 {
        return Err(Error::invalid(
            "multiscale frames train 3-output models only",
        ));
    }
    if frame.lag != config.lag {
        return Err(Error::invalid(format!(
            "frame lag {} does not match configured lag {}",
            frame.lag, config.lag
        )));
    }
    train_rows(&frame.inputs, &frame.targets, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{fit_scaler, to_supervised, ScalerKind};
    use rand::Rng;

    fn config(neurons: usize, layers: usize, lag: usize, heads: usize, peepholes: bool) -> LstmConfig {
        LstmConfig {
            neurons,
            layers,
            lag,
            batch_size: 4,
            epochs: 10,
            heads,
            peepholes,
            seed: 5,
        }
    }

    fn random_batch(
        cfg: &LstmConfig,
        rows: usize,
        rng: &mut ChaCha8Rng,
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let inputs = (0..rows)
            .map(|_| {
                (0..cfg.input_width())
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect()
            })
            .collect();
        let targets = (0..rows)
            .map(|_| (0..cfg.heads).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        (inputs, targets)
    }

    #[test]
    fn zero_model_on_zero_targets_has_zero_gradients() {
        let cfg = config(2, 2, 3, 1, true);
        let model = LstmModel::zeros(&cfg).unwrap();
        let inputs = vec![vec![0.5, -0.5, 1.0]; 3];
        let targets = vec![vec![0.0]; 3];
        let (grads, loss) = backward(&model, &inputs, &targets).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.flatten().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        for (heads, layers, peepholes) in [(1, 1, true), (1, 2, false), (3, 2, true)] {
            let cfg = config(3, layers, 3, heads, peepholes);
            let mut rng = ChaCha8Rng::seed_from_u64(101 + heads as u64);
            let mut model = LstmModel::random(&cfg, &mut rng).unwrap();
            let (inputs, targets) = random_batch(&cfg, 3, &mut rng);

            let (grads, _) = backward(&model, &inputs, &targets).unwrap();
            let analytic = grads.flatten();
            let base = model.flatten();
            let eps = 1e-5;
            let mut worst = 0.0_f64;
            for idx in 0..base.len() {
                let mut plus = base.clone();
                plus[idx] += eps;
                model.set_from_flat(&plus).unwrap();
                let up = batch_loss(&model, &inputs, &targets).unwrap();
                let mut minus = base.clone();
                minus[idx] -= eps;
                model.set_from_flat(&minus).unwrap();
                let down = batch_loss(&model, &inputs, &targets).unwrap();
                let numeric = (up - down) / (2.0 * eps);

                let a = analytic[idx];
                let scale = a.abs().max(numeric.abs());
                if scale > 1e-6 {
                    worst = worst.max((a - numeric).abs() / scale);
                } else {
                    assert!(
                        (a - numeric).abs() < 1e-9,
                        "near-zero gradient mismatch at {idx}: {a} vs {numeric}"
                    );
                }
            }
            model.set_from_flat(&base).unwrap();
            assert!(
                worst < 1e-5,
                "worst relative gradient error {worst} (heads {heads}, layers {layers}, peepholes {peepholes})"
            );
        }
    }

    #[test]
    fn duplicating_the_batch_leaves_gradients_unchanged() {
        let cfg = config(3, 2, 3, 1, true);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = LstmModel::random(&cfg, &mut rng).unwrap();
        let (inputs, targets) = random_batch(&cfg, 4, &mut rng);

        let (g1, l1) = backward(&model, &inputs, &targets).unwrap();
        let doubled_inputs: Vec<Vec<f64>> = inputs.iter().chain(&inputs).cloned().collect();
        let doubled_targets: Vec<Vec<f64>> = targets.iter().chain(&targets).cloned().collect();
        let (g2, l2) = backward(&model, &doubled_inputs, &doubled_targets).unwrap();

        assert!((l1 - l2).abs() <= 1e-12 * l1.abs().max(1.0));
        for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn backward_rejects_bad_batches() {
        let cfg = config(2, 1, 2, 1, true);
        let model = LstmModel::zeros(&cfg).unwrap();
        assert!(backward(&model, &[], &[]).is_err());
        assert!(backward(&model, &[vec![0.0; 2]], &[vec![0.0, 0.0]]).is_err());
        assert!(backward(&model, &[vec![0.0; 3]], &[vec![0.0]]).is_err());
    }

    #[test]
    fn constant_zero_targets_train_to_tiny_loss() {
        let cfg = LstmConfig {
            neurons: 4,
            layers: 1,
            lag: 4,
            batch_size: 8,
            epochs: 300,
            heads: 1,
            peepholes: true,
            seed: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let inputs: Vec<Vec<f64>> = (0..32)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let targets = vec![vec![0.0]; 32];
        let frame = SupervisedFrame {
            lag: 4,
            inputs: inputs.clone(),
            targets: vec![0.0; 32],
        };
        let model = train_supervised(&frame, &cfg).unwrap();
        let mse = batch_loss(&model, &inputs, &targets).unwrap();
        assert!(mse < 1e-4, "final training MSE {mse}");
    }

    #[test]
    fn training_is_bit_reproducible_per_seed() {
        let cfg = LstmConfig {
            neurons: 3,
            layers: 2,
            lag: 3,
            batch_size: 4,
            epochs: 5,
            heads: 1,
            peepholes: true,
            seed: 11,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let series: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let frame = to_supervised(&series, 3).unwrap();
        let a = train_supervised(&frame, &cfg).unwrap();
        let b = train_supervised(&frame, &cfg).unwrap();
        assert_eq!(a.flatten(), b.flatten());

        let mut other = cfg.clone();
        other.seed = 12;
        let c = train_supervised(&frame, &other).unwrap();
        assert_ne!(a.flatten(), c.flatten());
    }

    #[test]
    fn sine_wave_converges_to_small_one_step_error() {
        let series: Vec<f64> = (0..500)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 24.0).sin())
            .collect();
        let split = 400;
        let scaler = fit_scaler(&series[..split], ScalerKind::MinMaxSymmetric).unwrap();
        let scaled = scaler.apply_slice(&series).unwrap();
        let cfg = LstmConfig {
            neurons: 8,
            layers: 1,
            lag: 12,
            batch_size: 16,
            epochs: 200,
            heads: 1,
            peepholes: true,
            seed: 2,
        };
        let frame = to_supervised(&scaled[..split], 12).unwrap();
        let model = train_supervised(&frame, &cfg).unwrap();

        let mut squared = 0.0;
        let mut count = 0;
        for t in split..scaled.len() {
            let row = scaled[t - 12..t].to_vec();
            let y = super::super::forward(&model, &row).unwrap();
            squared += (y[0] - scaled[t]).powi(2);
            count += 1;
        }
        let rmse = (squared / count as f64).sqrt();
        assert!(rmse < 0.1, "one-step RMSE {rmse} in scaled units");
    }
}
