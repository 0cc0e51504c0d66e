//! ARIMA(p, d, q) modeling: simulation, conditional-sum-of-squares
//! fitting, forecasting, and exhaustive order selection.
//!
//! The model is `X_t = a0 + sum_i ar_iX_{t-i} + Z_t + sum_j ma_jZ_{t-j}`
//! on the `d`-times differenced series, with the leading moving-average
//! coefficient fixed to 1. Fitting minimizes the conditional sum of
//! squared residuals: the recursion starts at the first observation with
//! all pre-sample values and residuals set to zero.

use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::preprocess::{
    difference, integrate_forecast, split_train_test, DifferenceState, ScalerKind, ScalerParams,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Model orders: AR lags `p`, differencing depth `d`, MA lags `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArimaSpec {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaSpec {
    pub fn new(p: usize, d: usize, q: usize) -> Self {
        ArimaSpec { p, d, q }
    }

    /// Free parameters: intercept plus AR plus MA coefficients.
    pub fn parameter_count(&self) -> usize {
        1 + self.p + self.q
    }
}

impl std::fmt::Display for ArimaSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)
    }
}

/// A fitted model. `stationary_ar` / `invertible_ma` are advisory flags
/// from numeric root checks; fitting never enforces them.
#[derive(Debug, Clone)]
pub struct ArimaModel {
    pub spec: ArimaSpec,
    pub intercept: f64,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    /// In-sample residuals on the differenced series.
    pub residuals: Vec<f64>,
    pub diff_state: DifferenceState,
    /// Conditional sum of squared residuals at the fitted parameters.
    pub fit_loss: f64,
    pub stationary_ar: bool,
    pub invertible_ma: bool,
}

/// Optimizer knobs for [`fit_arima_with`].
#[derive(Debug, Clone, Copy)]
pub struct ArimaFitOptions {
    pub max_iters: usize,
    pub f_tolerance: f64,
    /// Estimate a constant term; fix it at zero for drift-free models
    /// such as a pure random walk.
    pub include_intercept: bool,
}

impl Default for ArimaFitOptions {
    fn default() -> Self {
        ArimaFitOptions {
            max_iters: 500,
            f_tolerance: 1e-8,
            include_intercept: true,
        }
    }
}

/// Draw `length` i.i.d. zero-mean normal disturbances with standard
/// deviation `sigma`.
pub fn white_noise(sigma: f64, length: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..length)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect()
}

/// Spectral radius of the companion matrix with `coeffs` as its first row,
/// estimated by repeated squaring with Frobenius renormalization. The
/// characteristic roots lie outside the unit circle exactly when this is
/// below 1.
fn companion_spectral_radius(coeffs: &[f64]) -> f64 {
    let p = coeffs.len();
    if p == 0 {
        return 0.0;
    }
    let mut a = vec![vec![0.0; p]; p];
    a[0].copy_from_slice(coeffs);
    for i in 1..p {
        a[i][i - 1] = 1.0;
    }

    let frobenius =
        |m: &[Vec<f64>]| m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let norm = frobenius(&a);
    if norm == 0.0 {
        return 0.0;
    }
    for row in a.iter_mut() {
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    let mut log_scale = norm.ln();

    let squarings = 24;
    for _ in 0..squarings {
        let mut sq = vec![vec![0.0; p]; p];
        for i in 0..p {
            for (k, a_k) in a.iter().enumerate() {
                let aik = a[i][k];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..p {
                    sq[i][j] += aik * a_k[j];
                }
            }
        }
        log_scale *= 2.0;
        let norm = frobenius(&sq);
        if norm == 0.0 {
            return 0.0;
        }
        for row in sq.iter_mut() {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
        log_scale += norm.ln();
        a = sq;
    }
    (log_scale / 2f64.powi(squarings)).exp()
}

/// Whether the AR polynomial with these coefficients is stationary.
pub fn ar_is_stationary(ar: &[f64]) -> bool {
    companion_spectral_radius(ar) < 1.0
}

/// Whether the MA polynomial with these coefficients is invertible.
pub fn ma_is_invertible(ma: &[f64]) -> bool {
    let negated: Vec<f64> = ma.iter().map(|b| -b).collect();
    companion_spectral_radius(&negated) < 1.0
}

/// Estimation confines characteristic roots to spectral radius below this.
const ROOT_RADIUS_LIMIT: f64 = 0.998;

/// How far the AR and MA root radii of `[a0, ar.., ma..]` poke past
/// [`ROOT_RADIUS_LIMIT`]; zero for stationary, invertible parameters.
fn root_radius_excess(p: usize, q: usize, full: &[f64]) -> f64 {
    let mut excess = 0.0;
    if p > 0 {
        excess += (companion_spectral_radius(&full[1..1 + p]) - ROOT_RADIUS_LIMIT).max(0.0);
    }
    if q > 0 {
        let negated: Vec<f64> = full[1 + p..1 + p + q].iter().map(|b| -b).collect();
        excess += (companion_spectral_radius(&negated) - ROOT_RADIUS_LIMIT).max(0.0);
    }
    excess
}

/// Simulate an ARMA process forward from zero initial conditions,
/// discarding the first `max(p, q) * 10` burn-in samples. Deterministic
/// for a fixed seed.
pub fn simulate_arma(
    intercept: f64,
    ar: &[f64],
    ma: &[f64],
    sigma: f64,
    length: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !ar_is_stationary(ar) {
        return Err(Error::Numerical(format!(
            "AR coefficients {ar:?} are non-stationary (spectral radius {:.4} >= 1)",
            companion_spectral_radius(ar)
        )));
    }
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::invalid(format!(
            "noise standard deviation must be finite and non-negative, got {sigma}"
        )));
    }
    let burn_in = ar.len().max(ma.len()) * 10;
    let total = length + burn_in;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = white_noise(sigma, total, &mut rng);

    let mut x = Vec::with_capacity(total);
    for t in 0..total {
        let mut value = intercept + noise[t];
        for (i, &a) in ar.iter().enumerate() {
            if t > i {
                value += a * x[t - 1 - i];
            }
        }
        for (j, &b) in ma.iter().enumerate() {
            if t > j {
                value += b * noise[t - 1 - j];
            }
        }
        x.push(value);
    }
    Ok(x.split_off(burn_in))
}

/// Residual recursion and loss for parameters `[a0, ar.., ma..]` on the
/// (already differenced) series, with pre-sample values and residuals
/// treated as zero.
fn css_residuals(x: &[f64], p: usize, q: usize, params: &[f64]) -> (Vec<f64>, f64) {
    let intercept = params[0];
    let ar = &params[1..1 + p];
    let ma = &params[1 + p..1 + p + q];
    let mut z = vec![0.0; x.len()];
    let mut loss = 0.0;
    for t in 0..x.len() {
        let mut pred = intercept;
        for (i, &a) in ar.iter().enumerate() {
            if t > i {
                pred += a * x[t - 1 - i];
            }
        }
        for (j, &b) in ma.iter().enumerate() {
            if t > j {
                pred += b * z[t - 1 - j];
            }
        }
        z[t] = x[t] - pred;
        loss += z[t] * z[t];
    }
    (z, loss)
}

/// Solve `a v = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when the system is numerically singular.
// Row updates read one row while writing another, which iterators cannot
// express without split-borrow noise.
#[allow(clippy::needless_range_loop)]
pub(crate) fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot_row = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot_row][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut v = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * v[k];
        }
        v[row] = acc / a[row][row];
    }
    Some(v)
}

/// Least-squares regression of `x_t` on its first `p` lags, with an
/// intercept column when requested: the AR half of a Hannan-Rissanen
/// style starting point. Returns `(intercept?, ar..)`.
fn ar_least_squares_start(x: &[f64], p: usize, include_intercept: bool) -> Vec<f64> {
    let n = x.len();
    let offset = include_intercept as usize;
    let cols = offset + p;
    let mut start = vec![0.0; cols];
    if include_intercept {
        start[0] = x.iter().sum::<f64>() / n as f64;
    }
    if p == 0 || n <= p {
        return start;
    }

    let mut ata = vec![vec![0.0; cols]; cols];
    let mut atb = vec![0.0; cols];
    for t in p..n {
        let mut row = Vec::with_capacity(cols);
        if include_intercept {
            row.push(1.0);
        }
        for i in 0..p {
            row.push(x[t - 1 - i]);
        }
        for a in 0..cols {
            atb[a] += row[a] * x[t];
            for b in 0..cols {
                ata[a][b] += row[a] * row[b];
            }
        }
    }
    match solve_linear(ata, atb) {
        // A wildly explosive start only slows the optimizer down.
        Some(coeffs) if coeffs.iter().all(|v| v.is_finite()) => coeffs,
        _ => start,
    }
}

/// Stage two of Hannan-Rissanen for models with MA terms: residuals of a
/// long autoregression stand in for the innovations, and `x_t` is
/// regressed on its own lags plus the proxied innovations. Returns
/// `(intercept?, ar.., ma..)`, or `None` when the series is too short or
/// the normal equations are singular.
fn hannan_rissanen_start(
    x: &[f64],
    p: usize,
    q: usize,
    include_intercept: bool,
) -> Option<Vec<f64>> {
    let n = x.len();
    let long = (2 * (p + q)).max(5);
    let first = long + q;
    let offset = include_intercept as usize;
    let cols = offset + p + q;
    if n < first + 10 * cols.max(1) {
        return None;
    }

    let long_fit = ar_least_squares_start(x, long, true);
    let mut noise = vec![0.0; n];
    for t in long..n {
        let mut pred = long_fit[0];
        for i in 0..long {
            pred += long_fit[1 + i] * x[t - 1 - i];
        }
        noise[t] = x[t] - pred;
    }

    let mut ata = vec![vec![0.0; cols]; cols];
    let mut atb = vec![0.0; cols];
    for t in first..n {
        let mut row = Vec::with_capacity(cols);
        if include_intercept {
            row.push(1.0);
        }
        for i in 0..p {
            row.push(x[t - 1 - i]);
        }
        for j in 0..q {
            row.push(noise[t - 1 - j]);
        }
        for a in 0..cols {
            atb[a] += row[a] * x[t];
            for b in 0..cols {
                ata[a][b] += row[a] * row[b];
            }
        }
    }
    let coeffs = solve_linear(ata, atb)?;
    coeffs.iter().all(|v| v.is_finite()).then_some(coeffs)
}

/// Fit with the default optimizer settings (500 iterations, 1e-8 loss
/// tolerance).
pub fn fit_arima(series: &[f64], spec: ArimaSpec) -> Result<ArimaModel> {
    fit_arima_with(series, spec, ArimaFitOptions::default())
}

/// Difference the series `spec.d` times, then minimize the conditional
/// sum of squared residuals over intercept, AR, and MA coefficients,
/// starting from the better of a least-squares AR fit and a
/// Hannan-Rissanen regression. The search is walled into the stationary,
/// invertible region, where the CSS surface has a well-defined minimum.
pub fn fit_arima_with(
    series: &[f64],
    spec: ArimaSpec,
    options: ArimaFitOptions,
) -> Result<ArimaModel> {
    let (x, diff_state) = difference(series, spec.d)?;
    let n = x.len();
    let min_len = 10 * spec.parameter_count();
    if n < min_len {
        return Err(Error::invalid(format!(
            "{n} observations after differencing; ARIMA{spec} needs at least {min_len}"
        )));
    }

    // With the intercept fixed at zero the optimizer sees only the AR
    // and MA coefficients; `to_full` restores the css_residuals layout.
    let to_full = |free: &[f64]| -> Vec<f64> {
        if options.include_intercept {
            free.to_vec()
        } else {
            let mut full = Vec::with_capacity(1 + free.len());
            full.push(0.0);
            full.extend_from_slice(free);
            full
        }
    };

    let (params, fit_loss, residuals) = if spec.p + spec.q == 0 {
        // Intercept-only: least squares has the closed form, the mean.
        let mean = if options.include_intercept {
            x.iter().sum::<f64>() / n as f64
        } else {
            0.0
        };
        let (z, loss) = css_residuals(&x, 0, 0, &[mean]);
        (vec![mean], loss, z)
    } else {
        let offset = options.include_intercept as usize;
        let mut start = vec![0.0; offset + spec.p + spec.q];
        let ar_part = ar_least_squares_start(&x, spec.p, options.include_intercept);
        start[..offset + spec.p].copy_from_slice(&ar_part);

        // The loss is the CSS plus a wall at the stationarity and
        // invertibility boundaries: CSS alone keeps improving as MA roots
        // cross into the non-invertible region, so without the wall the
        // surface has no minimum for the simplex to find.
        let weight = 1e4 * (1.0 + x.iter().map(|v| v * v).sum::<f64>());
        let objective = |free: &[f64]| {
            let full = to_full(free);
            let excess = root_radius_excess(spec.p, spec.q, &full);
            css_residuals(&x, spec.p, spec.q, &full).1 + weight * excess * excess
        };
        if spec.q > 0 {
            if let Some(hr) = hannan_rissanen_start(&x, spec.p, spec.q, options.include_intercept)
            {
                let hr_loss = objective(&hr);
                if hr_loss.is_finite() && hr_loss < objective(&start) {
                    start = hr;
                }
            }
        }
        let nm_options = NelderMeadOptions {
            max_iters: options.max_iters,
            f_tolerance: options.f_tolerance,
            initial_step: 0.1,
        };
        // A simplex stagnating in a narrow valley is unstuck by rebuilding
        // it around the best vertex, so restart before declaring failure.
        let mut nm = nelder_mead(objective, &start, nm_options)?;
        for _ in 0..2 {
            if nm.converged {
                break;
            }
            nm = nelder_mead(objective, &nm.x, nm_options)?;
        }
        if !nm.converged {
            return Err(Error::NonConvergence {
                iterations: nm.iterations,
                best_loss: nm.fx,
            });
        }
        let full = to_full(&nm.x);
        let (z, loss) = css_residuals(&x, spec.p, spec.q, &full);
        (full, loss, z)
    };

    let ar = params[1..1 + spec.p].to_vec();
    let ma = params[1 + spec.p..].to_vec();
    Ok(ArimaModel {
        spec,
        intercept: params[0],
        stationary_ar: ar_is_stationary(&ar),
        invertible_ma: ma_is_invertible(&ma),
        ar,
        ma,
        residuals,
        diff_state,
        fit_loss,
    })
}

/// Forecast `horizon` steps past the end of `history` (given in original,
/// undifferenced units). Residuals are recomputed over the supplied
/// history; future disturbances are zero; the differenced forecasts are
/// integrated back through all `d` levels.
pub fn forecast_arima(model: &ArimaModel, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let spec = model.spec;
    let mut x = history.to_vec();
    let mut tails = Vec::with_capacity(spec.d);
    for level in 0..spec.d {
        match x.last() {
            Some(&last) => tails.push(last),
            None => {
                return Err(Error::invalid(format!(
                    "history exhausted at differencing level {level} of {}",
                    spec.d
                )))
            }
        }
        x = x.windows(2).map(|w| w[1] - w[0]).collect();
    }
    let need = spec.p.max(spec.q);
    if x.len() < need {
        return Err(Error::invalid(format!(
            "{} differenced observations; forecasting ARIMA{spec} needs at least {need}",
            x.len()
        )));
    }

    let mut params = Vec::with_capacity(spec.parameter_count());
    params.push(model.intercept);
    params.extend_from_slice(&model.ar);
    params.extend_from_slice(&model.ma);
    let (z, _) = css_residuals(&x, spec.p, spec.q, &params);

    let n = x.len();
    let mut diff_forecasts = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let t = n + k;
        let mut pred = model.intercept;
        for (i, &a) in model.ar.iter().enumerate() {
            pred += a * x[t - 1 - i];
        }
        for (j, &b) in model.ma.iter().enumerate() {
            let lag = t - 1 - j;
            if lag < n {
                pred += b * z[lag];
            }
        }
        x.push(pred);
        diff_forecasts.push(pred);
    }
    Ok(integrate_forecast(&diff_forecasts, &mut tails))
}

/// Validation scores within this relative slack of the minimum count as
/// tied during order selection, so parsimony can break the tie.
const SELECTION_SLACK: f64 = 0.01;

/// Exhaustive order search: fit every `(p, d, q)` in the grid on the
/// chronological training side and score it by one-step validation RMSE.
/// Scores within 1% of the minimum count as tied; ties prefer fewer
/// estimated parameters, then smaller `d`, then smaller `p` (echoing the
/// parsimony convention of the one-standard-error rule). Candidates that
/// fail to fit are skipped.
pub fn select_order(
    series: &[f64],
    p_max: usize,
    d_max: usize,
    q_max: usize,
    validation_fraction: f64,
) -> Result<ArimaSpec> {
    let (train, _) = split_train_test(series, validation_fraction)?;
    let mut scored: Vec<(f64, usize, usize, usize, ArimaSpec)> = Vec::new();
    for p in 0..=p_max {
        for d in 0..=d_max {
            for q in 0..=q_max {
                let spec = ArimaSpec::new(p, d, q);
                let Ok(model) = fit_arima(train, spec) else {
                    continue;
                };
                let mut squared = 0.0;
                let mut count = 0usize;
                let mut failed = false;
                for t in train.len()..series.len() {
                    match forecast_arima(&model, &series[..t], 1) {
                        Ok(f) => {
                            let err = f[0] - series[t];
                            squared += err * err;
                            count += 1;
                        }
                        Err(_) => {
                            failed = true;
                            break;
                        }
                    }
                }
                if failed || count == 0 {
                    continue;
                }
                let rmse = (squared / count as f64).sqrt();
                if !rmse.is_finite() {
                    continue;
                }
                scored.push((rmse, spec.parameter_count(), d, p, spec));
            }
        }
    }
    let best_rmse = scored.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let threshold = best_rmse * (1.0 + SELECTION_SLACK);
    scored
        .into_iter()
        .filter(|c| c.0 <= threshold)
        .min_by(|a, b| (a.1, a.2, a.3).cmp(&(b.1, b.2, b.3)).then(a.0.total_cmp(&b.0)))
        .map(|c| c.4)
        .ok_or_else(|| Error::invalid("every candidate order failed to fit"))
}

const FORMAT_TAG: &str = "arima_v1";

/// Serialize a model (plus the pipeline's scaler, when one was used) as
/// flat key-value text. Floats use the shortest representation that
/// parses back bit-exactly.
pub fn write_model(model: &ArimaModel, scaler: Option<&ScalerParams>) -> String {
    let join = |vs: &[f64]| {
        vs.iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = String::new();
    out.push_str(FORMAT_TAG);
    out.push('\n');
    out.push_str(&format!("p {}\n", model.spec.p));
    out.push_str(&format!("d {}\n", model.spec.d));
    out.push_str(&format!("q {}\n", model.spec.q));
    out.push_str(&format!("intercept {}\n", model.intercept));
    out.push_str(&format!("ar {}\n", join(&model.ar)));
    out.push_str(&format!("ma {}\n", join(&model.ma)));
    out.push_str(&format!("seeds {}\n", join(&model.diff_state.seeds)));
    out.push_str(&format!("fit_loss {}\n", model.fit_loss));
    if let Some(s) = scaler {
        match s.kind {
            ScalerKind::LogPlusOne => out.push_str("scaler log\n"),
            ScalerKind::MinMaxSymmetric => {
                out.push_str(&format!("scaler minmax {} {}\n", s.min, s.max))
            }
        }
    }
    out
}

/// Parse [`write_model`] output. The reloaded model carries no in-sample
/// residuals (forecasting recomputes them from whatever history it is
/// given); root-check flags are recomputed from the coefficients.
pub fn read_model(text: &str) -> Result<(ArimaModel, Option<ScalerParams>)> {
    let bad = |msg: String| Error::ModelFormat(msg);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(tag) if tag.trim() == FORMAT_TAG => {}
        other => {
            return Err(bad(format!(
                "expected leading '{FORMAT_TAG}' tag, found {other:?}"
            )))
        }
    }

    let parse_f64 = |tok: &str| {
        tok.parse::<f64>()
            .map_err(|e| bad(format!("bad float {tok:?}: {e}")))
    };
    let mut p = None;
    let mut d = None;
    let mut q = None;
    let mut intercept = None;
    let mut ar = Vec::new();
    let mut ma = Vec::new();
    let mut seeds = Vec::new();
    let mut fit_loss = f64::NAN;
    let mut scaler = None;

    for line in lines {
        let mut tokens = line.split_whitespace();
        let key = tokens.next().expect("blank lines filtered out");
        let rest: Vec<&str> = tokens.collect();
        let single = || -> Result<&str> {
            if rest.len() == 1 {
                Ok(rest[0])
            } else {
                Err(bad(format!("key {key:?} expects one value, got {rest:?}")))
            }
        };
        match key {
            "p" => p = Some(single()?.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "d" => d = Some(single()?.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "q" => q = Some(single()?.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "intercept" => intercept = Some(parse_f64(single()?)?),
            "ar" => ar = rest.iter().copied().map(&parse_f64).collect::<Result<_>>()?,
            "ma" => ma = rest.iter().copied().map(&parse_f64).collect::<Result<_>>()?,
            "seeds" => seeds = rest.iter().copied().map(&parse_f64).collect::<Result<_>>()?,
            "fit_loss" => fit_loss = parse_f64(single()?)?,
            "scaler" => {
                scaler = Some(match rest.as_slice() {
                    ["log"] => ScalerParams {
                        kind: ScalerKind::LogPlusOne,
                        min: 0.0,
                        max: 0.0,
                    },
                    ["minmax", min, max] => ScalerParams {
                        kind: ScalerKind::MinMaxSymmetric,
                        min: parse_f64(min)?,
                        max: parse_f64(max)?,
                    },
                    other => return Err(bad(format!("unrecognized scaler line {other:?}"))),
                })
            }
            other => return Err(bad(format!("unrecognized key {other:?}"))),
        }
    }

    let spec = ArimaSpec::new(
        p.ok_or_else(|| bad("missing key 'p'".into()))?,
        d.ok_or_else(|| bad("missing key 'd'".into()))?,
        q.ok_or_else(|| bad("missing key 'q'".into()))?,
    );
    let intercept = intercept.ok_or_else(|| bad("missing key 'intercept'".into()))?;
    if ar.len() != spec.p || ma.len() != spec.q || seeds.len() != spec.d {
        return Err(bad(format!(
            "coefficient counts (ar {}, ma {}, seeds {}) disagree with orders {spec}",
            ar.len(),
            ma.len(),
            seeds.len()
        )));
    }
    let model = ArimaModel {
        spec,
        intercept,
        stationary_ar: ar_is_stationary(&ar),
        invertible_ma: ma_is_invertible(&ma),
        ar,
        ma,
        residuals: Vec::new(),
        diff_state: DifferenceState {
            order: spec.d,
            seeds,
        },
        fit_loss,
    };
    Ok((model, scaler))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lag1_autocorrelation(x: &[f64]) -> f64 {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let num: f64 = x
            .windows(2)
            .map(|w| (w[0] - mean) * (w[1] - mean))
            .sum();
        let den: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        num / den
    }

    fn pure_ar_model(intercept: f64, ar: Vec<f64>, d: usize, seeds: Vec<f64>) -> ArimaModel {
        ArimaModel {
            spec: ArimaSpec::new(ar.len(), d, 0),
            intercept,
            stationary_ar: ar_is_stationary(&ar),
            invertible_ma: true,
            ar,
            ma: Vec::new(),
            residuals: Vec::new(),
            diff_state: DifferenceState { order: d, seeds },
            fit_loss: 0.0,
        }
    }

    #[test]
    fn spectral_radius_matches_known_roots() {
        // AR(1) with coefficient a has radius |a|.
        assert!((companion_spectral_radius(&[0.8]) - 0.8).abs() < 1e-9);
        assert!((companion_spectral_radius(&[-0.95]) - 0.95).abs() < 1e-9);
        // x^2 = 0.2x + 0.35 has roots 0.7 and -0.5.
        assert!((companion_spectral_radius(&[0.2, 0.35]) - 0.7).abs() < 1e-6);
        assert!(!ar_is_stationary(&[1.01]));
        assert!(ar_is_stationary(&[]));
        assert!(companion_spectral_radius(&[0.0, 0.0]) == 0.0);
    }

    #[test]
    fn simulate_without_noise_or_dynamics_is_zero() {
        let x = simulate_arma(0.0, &[], &[], 0.0, 20, 1).unwrap();
        assert_eq!(x, vec![0.0; 20]);
    }

    #[test]
    fn simulate_reaches_deterministic_fixed_point() {
        // x = 1 + 0.5 x has fixed point 2.
        let x = simulate_arma(1.0, &[0.5], &[], 0.0, 60, 1).unwrap();
        assert!((x.last().unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn simulated_ar1_has_matching_autocorrelation() {
        let x = simulate_arma(0.0, &[0.8], &[], 1.0, 5000, 7).unwrap();
        let r1 = lag1_autocorrelation(&x);
        assert!((0.75..=0.85).contains(&r1), "lag-1 autocorrelation {r1}");
    }

    #[test]
    fn simulate_rejects_explosive_coefficients() {
        assert!(simulate_arma(0.0, &[1.01], &[], 1.0, 100, 1).is_err());
    }

    #[test]
    fn simulate_is_reproducible_per_seed() {
        let a = simulate_arma(0.3, &[0.6], &[0.2], 1.0, 200, 42).unwrap();
        let b = simulate_arma(0.3, &[0.6], &[0.2], 1.0, 200, 42).unwrap();
        let c = simulate_arma(0.3, &[0.6], &[0.2], 1.0, 200, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn noise_is_zero_mean_over_long_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = white_noise(1.0, 20000, &mut rng);
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        assert!(mean.abs() < 0.05, "noise mean {mean}");
    }

    #[test]
    fn intercept_only_fit_recovers_sample_mean() {
        let x = simulate_arma(3.0, &[], &[], 1.0, 500, 9).unwrap();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let model = fit_arima(&x, ArimaSpec::new(0, 0, 0)).unwrap();
        assert!((model.intercept - mean).abs() < 1e-12);
        assert_eq!(model.residuals.len(), x.len());
    }

    #[test]
    fn ar1_fit_recovers_generating_coefficient() {
        let x = simulate_arma(0.0, &[0.8], &[], 1.0, 5000, 21).unwrap();
        let model = fit_arima(&x, ArimaSpec::new(1, 0, 0)).unwrap();
        assert!(
            (0.75..=0.85).contains(&model.ar[0]),
            "fitted AR coefficient {}",
            model.ar[0]
        );
        assert!(model.stationary_ar);
    }

    #[test]
    fn suppressed_intercept_stays_exactly_zero() {
        let options = ArimaFitOptions {
            include_intercept: false,
            ..ArimaFitOptions::default()
        };

        // Fitted (0,1,0) on a random walk: forecasts repeat the last level.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let walk: Vec<f64> = white_noise(1.0, 300, &mut rng)
            .iter()
            .scan(10.0, |acc, e| {
                *acc += e;
                Some(*acc)
            })
            .collect();
        let model = fit_arima_with(&walk, ArimaSpec::new(0, 1, 0), options).unwrap();
        assert_eq!(model.intercept, 0.0);
        let forecast = forecast_arima(&model, &walk, 2).unwrap();
        assert_eq!(forecast[0], *walk.last().unwrap());
        assert_eq!(forecast[1], *walk.last().unwrap());

        // AR estimation still works with the constant pinned.
        let x = simulate_arma(0.0, &[0.8], &[], 1.0, 5000, 21).unwrap();
        let model = fit_arima_with(&x, ArimaSpec::new(1, 0, 0), options).unwrap();
        assert_eq!(model.intercept, 0.0);
        assert!(
            (0.75..=0.85).contains(&model.ar[0]),
            "fitted AR coefficient {}",
            model.ar[0]
        );
    }

    #[test]
    fn white_noise_fit_finds_no_structure() {
        let x = simulate_arma(0.0, &[], &[], 1.0, 5000, 33).unwrap();
        let model = fit_arima(&x, ArimaSpec::new(1, 0, 1)).unwrap();
        assert!(model.ar[0].abs() < 0.1, "spurious AR {}", model.ar[0]);
        assert!(model.ma[0].abs() < 0.1, "spurious MA {}", model.ma[0]);
    }

    #[test]
    fn fitted_residuals_are_centered() {
        let x = simulate_arma(1.0, &[0.7], &[], 1.0, 2000, 13).unwrap();
        let model = fit_arima(&x, ArimaSpec::new(1, 0, 0)).unwrap();
        let n = model.residuals.len() as f64;
        let mean = model.residuals.iter().sum::<f64>() / n;
        let sd = (model.fit_loss / n).sqrt();
        assert!(mean.abs() <= 0.05 * sd, "residual mean {mean}, sd {sd}");
    }

    #[test]
    fn optimizer_never_worsens_its_start() {
        let x = simulate_arma(0.5, &[0.6], &[0.3], 1.0, 1500, 17).unwrap();
        let model = fit_arima(&x, ArimaSpec::new(1, 0, 1)).unwrap();
        let mut start = vec![0.0; 3];
        start[..2].copy_from_slice(&ar_least_squares_start(&x, 1, true));
        let (_, start_loss) = css_residuals(&x, 1, 1, &start);
        assert!(
            model.fit_loss <= start_loss,
            "fit loss {} above start loss {start_loss}",
            model.fit_loss
        );
    }

    #[test]
    fn fit_rejects_short_series() {
        let x = vec![1.0; 15];
        assert!(fit_arima(&x, ArimaSpec::new(1, 0, 1)).is_err());
    }

    #[test]
    fn over_differenced_fit_converges_at_the_invertibility_boundary() {
        // Differencing white noise manufactures an MA(1) with a unit root
        // (theta = -1). The constrained fit must still converge, to a
        // coefficient at the boundary rather than past it.
        let noise = simulate_arma(0.0, &[], &[], 1.0, 400, 99).unwrap();
        let model = fit_arima(&noise, ArimaSpec::new(0, 1, 1)).unwrap();
        assert!(
            (-1.0..=-0.8).contains(&model.ma[0]),
            "ma coefficient {} should sit near the unit root",
            model.ma[0]
        );
        assert!(model.invertible_ma);
    }

    #[test]
    fn random_walk_forecast_carries_last_observation() {
        let model = pure_ar_model(0.0, vec![], 1, vec![40.0]);
        let forecast = forecast_arima(&model, &[40.0, 41.0, 42.0], 3).unwrap();
        assert_eq!(forecast, vec![42.0, 42.0, 42.0]);
        // Degenerate single-observation history still works.
        let forecast = forecast_arima(&model, &[42.0], 1).unwrap();
        assert_eq!(forecast, vec![42.0]);
    }

    #[test]
    fn ar1_forecast_decays_from_last_observation() {
        let model = pure_ar_model(0.0, vec![0.5], 0, vec![]);
        let forecast = forecast_arima(&model, &[3.0, 10.0], 2).unwrap();
        assert!((forecast[0] - 5.0).abs() < 1e-12);
        assert!((forecast[1] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn ma1_forecast_uses_then_forgets_last_residual() {
        let model = ArimaModel {
            spec: ArimaSpec::new(0, 0, 1),
            intercept: 0.0,
            ar: vec![],
            ma: vec![0.5],
            residuals: vec![],
            diff_state: DifferenceState {
                order: 0,
                seeds: vec![],
            },
            fit_loss: 0.0,
            stationary_ar: true,
            invertible_ma: true,
        };
        // With zero pre-sample residuals, history [2] leaves residual 2.
        let forecast = forecast_arima(&model, &[2.0], 2).unwrap();
        assert!((forecast[0] - 1.0).abs() < 1e-12);
        assert!(forecast[1].abs() < 1e-12);
    }

    #[test]
    fn forecast_horizon_zero_is_empty() {
        let model = pure_ar_model(0.0, vec![0.5], 0, vec![]);
        assert!(forecast_arima(&model, &[1.0], 0).unwrap().is_empty());
    }

    #[test]
    fn forecast_rejects_insufficient_history() {
        let model = pure_ar_model(0.0, vec![0.5, 0.1], 0, vec![]);
        assert!(forecast_arima(&model, &[1.0], 1).is_err());
        let diffed = pure_ar_model(0.0, vec![], 2, vec![0.0, 0.0]);
        assert!(forecast_arima(&diffed, &[1.0], 1).is_err());
    }

    #[test]
    fn true_parameters_forecast_at_the_noise_floor() {
        let sigma = 1.0;
        let x = simulate_arma(0.0, &[0.8], &[], sigma, 5000, 29).unwrap();
        let model = pure_ar_model(0.0, vec![0.8], 0, vec![]);
        let start = x.len() - 500;
        let mut squared = 0.0;
        for t in start..x.len() {
            let f = forecast_arima(&model, &x[..t], 1).unwrap();
            squared += (f[0] - x[t]).powi(2);
        }
        let rmse = (squared / 500.0).sqrt();
        assert!(
            (0.9 * sigma..=1.1 * sigma).contains(&rmse),
            "one-step RMSE {rmse} vs noise level {sigma}"
        );
    }

    #[test]
    fn order_search_prefers_differencing_for_random_walks() {
        let noise = simulate_arma(0.0, &[], &[], 1.0, 400, 51).unwrap();
        let mut walk = Vec::with_capacity(noise.len());
        let mut acc = 0.0;
        for z in noise {
            acc += z;
            walk.push(acc);
        }
        let spec = select_order(&walk, 1, 1, 1, 0.25).unwrap();
        assert_eq!(spec.d, 1, "selected {spec}");
    }

    #[test]
    fn order_search_detects_autoregression() {
        let x = simulate_arma(0.0, &[0.8], &[], 1.0, 600, 61).unwrap();
        let spec = select_order(&x, 2, 1, 1, 0.25).unwrap();
        assert!(spec.p >= 1, "selected {spec}");
    }

    #[test]
    fn order_search_with_single_cell_returns_it() {
        let x = simulate_arma(0.0, &[0.5], &[], 1.0, 300, 71).unwrap();
        let spec = select_order(&x, 0, 0, 0, 0.2).unwrap();
        assert_eq!(spec, ArimaSpec::new(0, 0, 0));
    }

    #[test]
    fn model_text_round_trips() {
        let x = simulate_arma(0.2, &[0.6], &[0.3], 1.0, 800, 81).unwrap();
        let shifted: Vec<f64> = x.iter().map(|v| v + 50.0).collect();
        let model = fit_arima(&shifted, ArimaSpec::new(1, 1, 1)).unwrap();
        let scaler = ScalerParams {
            kind: ScalerKind::LogPlusOne,
            min: 0.0,
            max: 0.0,
        };

        let text = write_model(&model, Some(&scaler));
        let (back, back_scaler) = read_model(&text).unwrap();
        assert_eq!(back.spec, model.spec);
        assert_eq!(back.intercept, model.intercept);
        assert_eq!(back.ar, model.ar);
        assert_eq!(back.ma, model.ma);
        assert_eq!(back.diff_state, model.diff_state);
        assert_eq!(back.fit_loss, model.fit_loss);
        assert_eq!(back_scaler, Some(scaler));

        let text = write_model(&model, None);
        let (_, none_scaler) = read_model(&text).unwrap();
        assert_eq!(none_scaler, None);
    }

    #[test]
    fn reloaded_model_forecasts_identically() {
        let x = simulate_arma(0.1, &[0.7], &[], 1.0, 500, 91).unwrap();
        let model = fit_arima(&x, ArimaSpec::new(1, 0, 0)).unwrap();
        let (back, _) = read_model(&write_model(&model, None)).unwrap();
        let a = forecast_arima(&model, &x, 12).unwrap();
        let b = forecast_arima(&back, &x, 12).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn model_text_rejects_corruption() {
        let model = pure_ar_model(0.0, vec![0.5], 0, vec![]);
        let good = write_model(&model, None);
        assert!(read_model(&good.replace("arima_v1", "arima_v2")).is_err());
        assert!(read_model(&good.replace("intercept 0", "intercept zero")).is_err());
        assert!(read_model(&good.replace("ar 0.5", "ar 0.5 0.1")).is_err());
        assert!(read_model("").is_err());
    }
}
