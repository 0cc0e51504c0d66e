//! Model cost accounting, grid search, and the model-comparison matrix.
//!
//! The cost of a network is counted in neurons: a separate single-scale
//! model costs `N*H + I + 1` (hidden units plus input taps plus one
//! output), a combined `m`-scale model costs `N*H + m*I + m`. Grid search
//! minimizes validation RMSE over a candidate lattice, and the experiment
//! matrix (see [`run_experiment_matrix`]) reproduces the full
//! ARIMA-versus-LSTM comparison across scopes and scales.

mod matrix;
mod report;

pub use matrix::{
    run_experiment_matrix, EvalCell, EvalReport, MatrixConfigs, ModelFamily, ReductionRow,
    ScopeLevel,
};
pub use report::{parse_grid_spec, render_results_table, render_rmse_chart_svg, write_grid_spec};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lstm::{fit_series, predict_series, LstmConfig};
use crate::preprocess::split_train_test;

/// Sizing of one model for neuron-count accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostInputs {
    /// Neurons per hidden layer.
    pub neurons: usize,
    /// Hidden layers.
    pub layers: usize,
    /// Lag (input taps per scale).
    pub lag: usize,
    /// Number of scales served by the model.
    pub scales: usize,
}

impl CostInputs {
    pub fn new(neurons: usize, layers: usize, lag: usize, scales: usize) -> Self {
        CostInputs {
            neurons,
            layers,
            lag,
            scales,
        }
    }
}

/// Neuron count of a separate single-scale model: `N*H + I + 1`.
pub fn neurons_separate(neurons: usize, layers: usize, lag: usize) -> usize {
    assert!(
        neurons >= 1 && layers >= 1 && lag >= 1,
        "model dimensions must be at least 1"
    );
    neurons * layers + lag + 1
}

/// Neuron count of a combined multi-scale model: `N*H + m*I + m`.
pub fn neurons_combined(neurons: usize, layers: usize, lag: usize, scales: usize) -> usize {
    assert!(
        neurons >= 1 && layers >= 1 && lag >= 1 && scales >= 1,
        "model dimensions must be at least 1"
    );
    neurons * layers + scales * lag + scales
}

/// Neuron totals for a set of separate models against one combined model.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    /// Per separate model, in input order.
    pub separate: Vec<usize>,
    pub separate_total: usize,
    pub combined: usize,
    /// `100 * (1 - combined/separate_total)`, rounded to 2 decimals
    /// (half away from zero).
    pub reduction_percent: f64,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Compare the neuron cost of separate models with a combined model.
pub fn cost_report(separate: &[CostInputs], combined: &CostInputs) -> Result<CostReport> {
    if separate.is_empty() {
        return Err(Error::invalid("cost report needs at least one separate model"));
    }
    let per_model: Vec<usize> = separate
        .iter()
        .map(|c| neurons_separate(c.neurons, c.layers, c.lag))
        .collect();
    let separate_total: usize = per_model.iter().sum();
    let combined_total =
        neurons_combined(combined.neurons, combined.layers, combined.lag, combined.scales);
    let reduction = 100.0 * (1.0 - combined_total as f64 / separate_total as f64);
    Ok(CostReport {
        separate: per_model,
        separate_total,
        combined: combined_total,
        reduction_percent: round2(reduction),
    })
}

/// Best published building-level sizings, one separate model per scale in
/// [15, 30, 60]-minute order plus the combined model.
pub fn best_building_costs() -> (Vec<CostInputs>, CostInputs) {
    (
        vec![
            CostInputs::new(48, 2, 12, 1),
            CostInputs::new(32, 3, 48, 1),
            CostInputs::new(48, 3, 24, 1),
        ],
        CostInputs::new(32, 2, 24, 3),
    )
}

/// Best published AP-level sizings, same layout as [`best_building_costs`].
pub fn best_access_point_costs() -> (Vec<CostInputs>, CostInputs) {
    (
        vec![
            CostInputs::new(48, 4, 24, 1),
            CostInputs::new(48, 2, 24, 1),
            CostInputs::new(16, 3, 48, 1),
        ],
        CostInputs::new(32, 3, 4, 3),
    )
}

/// Root mean square error between a forecast and the observed values.
pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.is_empty() {
        return Err(Error::invalid("rmse needs at least one value"));
    }
    if predicted.len() != actual.len() {
        return Err(Error::invalid(format!(
            "rmse length mismatch: {} predicted vs {} actual",
            predicted.len(),
            actual.len()
        )));
    }
    let sum_sq: f64 = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum();
    Ok((sum_sq / predicted.len() as f64).sqrt())
}

/// Candidate lattice for LSTM hyperparameter search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    pub neurons: Vec<usize>,
    pub layers: Vec<usize>,
    pub lags: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub epochs: Vec<usize>,
    pub seed: u64,
}

impl GridSpec {
    /// Reduced lattice sized for interactive runs.
    pub fn desk_scale() -> Self {
        GridSpec {
            neurons: vec![8, 16, 32],
            layers: vec![1, 2],
            lags: vec![4, 12, 24],
            batch_sizes: vec![16],
            epochs: vec![100],
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, list) in [
            ("neurons", &self.neurons),
            ("layers", &self.layers),
            ("lags", &self.lags),
            ("batch_sizes", &self.batch_sizes),
            ("epochs", &self.epochs),
        ] {
            if list.is_empty() {
                return Err(Error::invalid(format!("grid list {name} is empty")));
            }
        }
        Ok(())
    }

    /// Every candidate configuration, in enumeration order (neurons
    /// outermost, epochs innermost).
    pub fn configurations(&self, heads: usize) -> Vec<LstmConfig> {
        let mut out = Vec::new();
        for &n in &self.neurons {
            for &h in &self.layers {
                for &lag in &self.lags {
                    for &b in &self.batch_sizes {
                        for &e in &self.epochs {
                            out.push(LstmConfig {
                                neurons: n,
                                layers: h,
                                lag,
                                batch_size: b,
                                epochs: e,
                                heads,
                                peepholes: true,
                                seed: self.seed,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// One evaluated grid point. A failed training run keeps its slot with
/// no RMSE so reports can show the full lattice.
#[derive(Debug, Clone)]
pub struct GridCandidate {
    pub config: LstmConfig,
    /// Eq. cost of the candidate (separate or combined by head count).
    pub neuron_count: usize,
    pub validation_rmse: Option<f64>,
}

/// Result of a full grid search.
#[derive(Debug, Clone)]
pub struct GridSearchOutcome {
    pub best: LstmConfig,
    pub best_rmse: f64,
    /// All candidates in grid-enumeration order.
    pub candidates: Vec<GridCandidate>,
}

/// Evaluate every configuration in the grid and pick the best.
///
/// `evaluate` trains a model for one candidate and returns its validation
/// RMSE. Candidates run in parallel; results are merged in enumeration
/// order, so the outcome does not depend on scheduling. Minimum RMSE
/// wins; ties go to the smaller neuron count, then to the earlier
/// candidate.
pub fn grid_search<F>(grid: &GridSpec, heads: usize, evaluate: F) -> Result<GridSearchOutcome>
where
    F: Fn(&LstmConfig) -> Result<f64> + Sync,
{
    grid.validate()?;
    let configs = grid.configurations(heads);
    let candidates: Vec<GridCandidate> = configs
        .into_par_iter()
        .map(|config| {
            let validation_rmse = match evaluate(&config) {
                Ok(r) if r.is_finite() => Some(r),
                _ => None,
            };
            let neuron_count = if heads == 1 {
                neurons_separate(config.neurons, config.layers, config.lag)
            } else {
                neurons_combined(config.neurons, config.layers, config.lag, heads)
            };
            GridCandidate {
                config,
                neuron_count,
                validation_rmse,
            }
        })
        .collect();
    let best = candidates
        .iter()
        .filter_map(|c| c.validation_rmse.map(|r| (r, c.neuron_count, &c.config)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(r, _, config)| (config.clone(), r));
    match best {
        Some((best, best_rmse)) => Ok(GridSearchOutcome {
            best,
            best_rmse,
            candidates,
        }),
        None => Err(Error::invalid(
            "every grid configuration failed to train",
        )),
    }
}

/// Grid search over one series: each candidate trains on the head of the
/// series and is scored by rolling one-step RMSE over the tail.
pub fn grid_search_series(
    grid: &GridSpec,
    series: &[f64],
    validation_fraction: f64,
    difference_order: usize,
) -> Result<GridSearchOutcome> {
    let (train, validation) = split_train_test(series, validation_fraction)?;
    grid_search(grid, 1, |config| {
        let model = fit_series(train, config, difference_order)?;
        let mut predicted = Vec::with_capacity(validation.len());
        for k in train.len()..series.len() {
            predicted.push(predict_series(&model, &series[..k], 1)?[0]);
        }
        rmse(&predicted, validation)
    })
}
