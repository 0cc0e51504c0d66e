//! The full model-comparison matrix: ARIMA and LSTM (separate per scale
//! and combined across scales) at building level and per access point.
//!
//! Every model is scored by rolling one-step-ahead forecasts over a
//! held-out tail of the series, in original occupant units. Separate and
//! ARIMA models predict every interval of their own scale; the combined
//! model predicts at its native 60-minute anchors, one value per scale.

use rayon::prelude::*;

use crate::arima::{fit_arima_with, forecast_arima, select_order, ArimaFitOptions};
use crate::error::{Error, Result};
use crate::experiment::{neurons_combined, neurons_separate, rmse};
use crate::ingest::{Scale, Scope, TimedSeries};
use crate::lstm::{fit_multiscale, fit_series, predict_multiscale, predict_series, LstmConfig};
use crate::preprocess::{fit_scaler, ScalerKind};
use crate::synth::SynthDataset;

/// Aggregation level of a report row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScopeLevel {
    Building,
    AccessPoint,
}

impl ScopeLevel {
    pub fn label(self) -> &'static str {
        match self {
            ScopeLevel::Building => "building",
            ScopeLevel::AccessPoint => "ap",
        }
    }
}

/// Model family under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelFamily {
    Arima,
    LstmSeparate,
    LstmCombined,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 3] = [
        ModelFamily::Arima,
        ModelFamily::LstmSeparate,
        ModelFamily::LstmCombined,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ModelFamily::Arima => "ARIMA",
            ModelFamily::LstmSeparate => "LSTM-separate",
            ModelFamily::LstmCombined => "LSTM-combined",
        }
    }
}

/// One RMSE cell of the comparison matrix.
#[derive(Debug, Clone)]
pub struct EvalCell {
    pub level: ScopeLevel,
    pub scale: Scale,
    pub family: ModelFamily,
    /// Building-level RMSE, or the unweighted mean across APs.
    pub rmse: f64,
    /// Human-readable model sizing/order description.
    pub config: String,
    /// Neuron cost for LSTM families; ARIMA has none.
    pub neuron_count: Option<usize>,
    /// Raw per-AP values behind an AP-level mean; empty at building level.
    pub per_ap: Vec<(String, f64)>,
}

/// Error reduction of one family relative to another, in percent.
#[derive(Debug, Clone)]
pub struct ReductionRow {
    pub level: ScopeLevel,
    pub scale: Scale,
    pub baseline: ModelFamily,
    pub improved: ModelFamily,
    /// `100 * (1 - improved/baseline)`; positive when `improved` wins.
    pub percent: f64,
}

/// Full comparison: 18 RMSE cells and the pairwise reductions per cell
/// group.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub cells: Vec<EvalCell>,
    pub reductions: Vec<ReductionRow>,
}

impl EvalReport {
    pub fn cell(&self, level: ScopeLevel, scale: Scale, family: ModelFamily) -> Option<&EvalCell> {
        self.cells
            .iter()
            .find(|c| c.level == level && c.scale == scale && c.family == family)
    }

    pub fn reduction(
        &self,
        level: ScopeLevel,
        scale: Scale,
        baseline: ModelFamily,
        improved: ModelFamily,
    ) -> Option<f64> {
        self.reductions
            .iter()
            .find(|r| {
                r.level == level
                    && r.scale == scale
                    && r.baseline == baseline
                    && r.improved == improved
            })
            .map(|r| r.percent)
    }
}

/// Model sizings and evaluation settings for one matrix run.
#[derive(Debug, Clone)]
pub struct MatrixConfigs {
    /// Separate building-level models in [15, 30, 60]-minute order.
    pub building_separate: [LstmConfig; 3],
    pub building_combined: LstmConfig,
    /// Separate AP-level models in [15, 30, 60]-minute order.
    pub ap_separate: [LstmConfig; 3],
    pub ap_combined: LstmConfig,
    /// Upper ARIMA order bounds (p, d, q) for per-series selection.
    pub arima_max: (usize, usize, usize),
    /// Tail fraction of the training span used to select ARIMA orders.
    pub arima_validation_fraction: f64,
    /// Differencing applied inside every LSTM pipeline.
    pub difference_order: usize,
    /// Tail fraction of each series held out for scoring.
    pub test_fraction: f64,
    /// Base seed; per-model seeds are derived from it.
    pub seed: u64,
}

fn lstm_sizing(neurons: usize, layers: usize, lag: usize, epochs: usize, heads: usize) -> LstmConfig {
    LstmConfig {
        neurons,
        layers,
        lag,
        batch_size: 16,
        epochs,
        heads,
        peepholes: true,
        seed: 0,
    }
}

impl MatrixConfigs {
    /// The best published sizings (1000 epochs, batch 16). Hours of
    /// single-core compute; prefer [`MatrixConfigs::benchmark`] for tests.
    pub fn published_best() -> Self {
        MatrixConfigs {
            building_separate: [
                lstm_sizing(48, 2, 12, 1000, 1),
                lstm_sizing(32, 3, 48, 1000, 1),
                lstm_sizing(48, 3, 24, 1000, 1),
            ],
            building_combined: lstm_sizing(32, 2, 24, 1000, 3),
            ap_separate: [
                lstm_sizing(48, 4, 24, 1000, 1),
                lstm_sizing(48, 2, 24, 1000, 1),
                lstm_sizing(16, 3, 48, 1000, 1),
            ],
            ap_combined: lstm_sizing(32, 3, 4, 1000, 3),
            arima_max: (2, 1, 1),
            arima_validation_fraction: 0.2,
            difference_order: 1,
            test_fraction: 0.2,
            seed: 1,
        }
    }

    /// Desk-scale sizings for the bundled benchmark: minutes, not hours.
    pub fn benchmark() -> Self {
        MatrixConfigs {
            building_separate: [
                lstm_sizing(12, 1, 12, 60, 1),
                lstm_sizing(12, 1, 12, 60, 1),
                lstm_sizing(12, 1, 24, 60, 1),
            ],
            building_combined: lstm_sizing(16, 1, 12, 60, 3),
            ap_separate: [
                lstm_sizing(12, 1, 12, 60, 1),
                lstm_sizing(12, 1, 12, 60, 1),
                lstm_sizing(12, 1, 24, 60, 1),
            ],
            ap_combined: lstm_sizing(16, 1, 12, 60, 3),
            arima_max: (2, 1, 1),
            arima_validation_fraction: 0.2,
            difference_order: 0,
            test_fraction: 0.15,
            seed: 9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for cfg in self.building_separate.iter().chain(&self.ap_separate) {
            cfg.validate()?;
            if cfg.heads != 1 {
                return Err(Error::invalid("separate sizings must have one output"));
            }
        }
        for cfg in [&self.building_combined, &self.ap_combined] {
            cfg.validate()?;
            if cfg.heads != 3 {
                return Err(Error::invalid("combined sizings must have three outputs"));
            }
        }
        if !(0.0..1.0).contains(&self.test_fraction) || self.test_fraction <= 0.0 {
            return Err(Error::invalid("test fraction must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.arima_validation_fraction)
            || self.arima_validation_fraction <= 0.0
        {
            return Err(Error::invalid("validation fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    fn for_level(&self, level: ScopeLevel) -> (&[LstmConfig; 3], &LstmConfig) {
        match level {
            ScopeLevel::Building => (&self.building_separate, &self.building_combined),
            ScopeLevel::AccessPoint => (&self.ap_separate, &self.ap_combined),
        }
    }
}

fn derived_seed(base: u64, instance: usize, scale_idx: usize, family: u64) -> u64 {
    base.wrapping_add(1_000_003 * instance as u64 + 101 * scale_idx as u64 + family)
}

fn lstm_description(cfg: &LstmConfig) -> String {
    format!(
        "N={} H={} I={} batch={} epochs={}",
        cfg.neurons, cfg.layers, cfg.lag, cfg.batch_size, cfg.epochs
    )
}

/// Per-family outcomes for one scope instance (the building or one AP).
struct InstanceOutcome {
    /// (rmse, description) per scale, [15, 30, 60] order.
    arima: [(f64, String); 3],
    separate: [f64; 3],
    combined: [f64; 3],
}

fn run_instance(
    series: &[TimedSeries; 3],
    split60: usize,
    configs: &MatrixConfigs,
    level: ScopeLevel,
    instance: usize,
) -> Result<InstanceOutcome> {
    let (sep_cfgs, comb_cfg) = configs.for_level(level);
    let mut arima: [(f64, String); 3] = Default::default();
    let mut separate = [0.0; 3];

    for (j, s) in series.iter().enumerate() {
        let factor = (3_600 / s.step_seconds) as usize;
        let split = split60 * factor;

        // ARIMA on the log-transformed series, orders selected on the
        // training span, scored by rolling one-step forecasts.
        let scaler = fit_scaler(&s.values[..split], ScalerKind::LogPlusOne)?;
        let z = scaler.apply_slice(&s.values)?;
        let spec = select_order(
            &z[..split],
            configs.arima_max.0,
            configs.arima_max.1,
            configs.arima_max.2,
            configs.arima_validation_fraction,
        )?;
        let options = ArimaFitOptions {
            max_iters: 2_000,
            ..ArimaFitOptions::default()
        };
        let model = fit_arima_with(&z[..split], spec, options)?;
        let mut predicted = Vec::with_capacity(s.values.len() - split);
        for k in split..s.values.len() {
            let f = forecast_arima(&model, &z[..k], 1)?[0];
            predicted.push(scaler.invert(f).max(0.0));
        }
        arima[j] = (
            rmse(&predicted, &s.values[split..])?,
            format!("log10(x+1), order {spec}"),
        );

        // Separate LSTM for this scale alone.
        let mut cfg = sep_cfgs[j].clone();
        cfg.seed = derived_seed(configs.seed, instance, j, 1);
        let model = fit_series(&s.values[..split], &cfg, configs.difference_order)?;
        let mut predicted = Vec::with_capacity(s.values.len() - split);
        for k in split..s.values.len() {
            predicted.push(predict_series(&model, &s.values[..k], 1)?[0]);
        }
        separate[j] = rmse(&predicted, &s.values[split..])?;
    }

    // One combined model for all three scales, scored at its native
    // 60-minute anchors: each anchor yields one prediction per scale.
    let mut cfg = comb_cfg.clone();
    cfg.seed = derived_seed(configs.seed, instance, 0, 2);
    let train: Vec<TimedSeries> = series
        .iter()
        .map(|s| {
            let factor = (3_600 / s.step_seconds) as usize;
            TimedSeries {
                start: s.start,
                step_seconds: s.step_seconds,
                values: s.values[..split60 * factor].to_vec(),
            }
        })
        .collect();
    let model = fit_multiscale(&train[0], &train[1], &train[2], &cfg, configs.difference_order)?;
    let n60 = series[2].values.len();
    let mut predicted: [Vec<f64>; 3] = Default::default();
    let mut actual: [Vec<f64>; 3] = Default::default();
    for k60 in split60..n60 {
        let step = predict_multiscale(
            &model,
            &series[0].values[..k60 * 4],
            &series[1].values[..k60 * 2],
            &series[2].values[..k60],
            1,
        )?;
        for j in 0..3 {
            let factor = (3_600 / series[j].step_seconds) as usize;
            predicted[j].push(step[j][0]);
            actual[j].push(series[j].values[k60 * factor]);
        }
    }
    let mut combined = [0.0; 3];
    for j in 0..3 {
        combined[j] = rmse(&predicted[j], &actual[j])?;
    }

    Ok(InstanceOutcome {
        arima,
        separate,
        combined,
    })
}

/// Train and score every family at both levels over a synthetic dataset.
///
/// Scope instances (the building and each AP) run as independent
/// parallel tasks; results are assembled in a fixed order so the report
/// is identical regardless of scheduling.
pub fn run_experiment_matrix(
    dataset: &SynthDataset,
    configs: &MatrixConfigs,
) -> Result<EvalReport> {
    configs.validate()?;
    if dataset.ap_ids.is_empty() {
        return Err(Error::invalid("dataset has no access points"));
    }

    let mut scopes = vec![Scope::Building];
    scopes.extend(dataset.ap_ids.iter().cloned().map(Scope::AccessPoint));
    let mut inputs = Vec::with_capacity(scopes.len());
    for scope in &scopes {
        let mut series = Vec::with_capacity(3);
        for scale in Scale::ALL {
            let truth = dataset.truth_for(scope, scale).ok_or_else(|| {
                Error::invalid(format!("dataset lacks {} at {} minutes", scope, scale.minutes()))
            })?;
            series.push(truth.to_timed());
        }
        let series: [TimedSeries; 3] = series.try_into().expect("three scales");
        inputs.push(series);
    }

    let n60 = inputs[0][2].values.len();
    let test60 = ((configs.test_fraction * n60 as f64).ceil() as usize).max(1);
    if test60 >= n60 {
        return Err(Error::invalid("test split leaves no training data"));
    }
    let split60 = n60 - test60;

    let outcomes: Vec<InstanceOutcome> = inputs
        .par_iter()
        .enumerate()
        .map(|(instance, series)| {
            let level = if instance == 0 {
                ScopeLevel::Building
            } else {
                ScopeLevel::AccessPoint
            };
            run_instance(series, split60, configs, level, instance)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::with_capacity(18);
    for level in [ScopeLevel::Building, ScopeLevel::AccessPoint] {
        let (sep_cfgs, comb_cfg) = configs.for_level(level);
        for (j, scale) in Scale::ALL.into_iter().enumerate() {
            for family in ModelFamily::ALL {
                let value = |o: &InstanceOutcome| match family {
                    ModelFamily::Arima => o.arima[j].0,
                    ModelFamily::LstmSeparate => o.separate[j],
                    ModelFamily::LstmCombined => o.combined[j],
                };
                let (rmse_value, per_ap) = match level {
                    ScopeLevel::Building => (value(&outcomes[0]), Vec::new()),
                    ScopeLevel::AccessPoint => {
                        let per_ap: Vec<(String, f64)> = dataset
                            .ap_ids
                            .iter()
                            .zip(&outcomes[1..])
                            .map(|(ap, o)| (ap.clone(), value(o)))
                            .collect();
                        let mean =
                            per_ap.iter().map(|(_, r)| r).sum::<f64>() / per_ap.len() as f64;
                        (mean, per_ap)
                    }
                };
                let (config, neuron_count) = match family {
                    ModelFamily::Arima => {
                        let desc = match level {
                            ScopeLevel::Building => outcomes[0].arima[j].1.clone(),
                            ScopeLevel::AccessPoint => {
                                let mut descs: Vec<&str> = outcomes[1..]
                                    .iter()
                                    .map(|o| o.arima[j].1.as_str())
                                    .collect();
                                descs.dedup();
                                if descs.len() == 1 {
                                    descs[0].to_string()
                                } else {
                                    "log10(x+1), orders selected per AP".to_string()
                                }
                            }
                        };
                        (desc, None)
                    }
                    ModelFamily::LstmSeparate => {
                        let cfg = &sep_cfgs[j];
                        (
                            lstm_description(cfg),
                            Some(neurons_separate(cfg.neurons, cfg.layers, cfg.lag)),
                        )
                    }
                    ModelFamily::LstmCombined => (
                        lstm_description(comb_cfg),
                        Some(neurons_combined(
                            comb_cfg.neurons,
                            comb_cfg.layers,
                            comb_cfg.lag,
                            3,
                        )),
                    ),
                };
                cells.push(EvalCell {
                    level,
                    scale,
                    family,
                    rmse: rmse_value,
                    config,
                    neuron_count,
                    per_ap,
                });
            }
        }
    }

    let mut reductions = Vec::with_capacity(18);
    let report = EvalReport {
        cells,
        reductions: Vec::new(),
    };
    for level in [ScopeLevel::Building, ScopeLevel::AccessPoint] {
        for scale in Scale::ALL {
            for (baseline, improved) in [
                (ModelFamily::Arima, ModelFamily::LstmSeparate),
                (ModelFamily::Arima, ModelFamily::LstmCombined),
                (ModelFamily::LstmSeparate, ModelFamily::LstmCombined),
            ] {
                let base = report.cell(level, scale, baseline).expect("cell").rmse;
                let imp = report.cell(level, scale, improved).expect("cell").rmse;
                let percent = if base > 0.0 {
                    100.0 * (1.0 - imp / base)
                } else {
                    0.0
                };
                reductions.push(ReductionRow {
                    level,
                    scale,
                    baseline,
                    improved,
                    percent,
                });
            }
        }
    }
    Ok(EvalReport {
        cells: report.cells,
        reductions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_sessions, BuildingProfile};

    fn tiny_dataset() -> crate::synth::SynthDataset {
        let profile = BuildingProfile {
            ap_count: 2,
            days: 6,
            start: 1_452_816_000,
            daily_shape: [
                2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 3.0, 4.0, 6.0, 8.0, 9.0, 9.0, 8.0, 8.0, 9.0, 9.0,
                8.0, 6.0, 4.0, 3.0, 2.0, 2.0, 2.0, 2.0,
            ],
            weekend_scale: 0.6,
            session_mean_minutes: 40.0,
            noise: 0.2,
            seed: 33,
        };
        generate_sessions(&profile).unwrap()
    }

    fn tiny_configs() -> MatrixConfigs {
        let sep = |lag| lstm_sizing(3, 1, lag, 4, 1);
        MatrixConfigs {
            building_separate: [sep(4), sep(4), sep(6)],
            building_combined: lstm_sizing(4, 1, 4, 4, 3),
            ap_separate: [sep(4), sep(4), sep(6)],
            ap_combined: lstm_sizing(4, 1, 4, 4, 3),
            arima_max: (1, 1, 1),
            arima_validation_fraction: 0.25,
            difference_order: 1,
            test_fraction: 0.2,
            seed: 5,
        }
    }

    #[test]
    fn matrix_has_eighteen_cells_and_reductions() {
        let report = run_experiment_matrix(&tiny_dataset(), &tiny_configs()).unwrap();
        assert_eq!(report.cells.len(), 18);
        assert_eq!(report.reductions.len(), 18);
        for level in [ScopeLevel::Building, ScopeLevel::AccessPoint] {
            for scale in Scale::ALL {
                for family in ModelFamily::ALL {
                    let cell = report.cell(level, scale, family).unwrap();
                    assert!(cell.rmse.is_finite() && cell.rmse >= 0.0);
                    match level {
                        ScopeLevel::Building => assert!(cell.per_ap.is_empty()),
                        ScopeLevel::AccessPoint => assert_eq!(cell.per_ap.len(), 2),
                    }
                    match family {
                        ModelFamily::Arima => assert!(cell.neuron_count.is_none()),
                        _ => assert!(cell.neuron_count.is_some()),
                    }
                }
            }
        }
    }

    #[test]
    fn ap_mean_is_the_unweighted_mean_of_per_ap_values() {
        let report = run_experiment_matrix(&tiny_dataset(), &tiny_configs()).unwrap();
        for cell in &report.cells {
            if cell.level == ScopeLevel::AccessPoint {
                let mean =
                    cell.per_ap.iter().map(|(_, r)| r).sum::<f64>() / cell.per_ap.len() as f64;
                assert!((cell.rmse - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matrix_runs_are_reproducible() {
        let dataset = tiny_dataset();
        let configs = tiny_configs();
        let a = run_experiment_matrix(&dataset, &configs).unwrap();
        let b = run_experiment_matrix(&dataset, &configs).unwrap();
        for (ca, cb) in a.cells.iter().zip(&b.cells) {
            assert_eq!(ca.rmse.to_bits(), cb.rmse.to_bits());
        }
        for (ra, rb) in a.reductions.iter().zip(&b.reductions) {
            assert_eq!(ra.percent.to_bits(), rb.percent.to_bits());
        }
    }

    #[test]
    fn reductions_match_their_cells() {
        let report = run_experiment_matrix(&tiny_dataset(), &tiny_configs()).unwrap();
        for row in &report.reductions {
            let base = report.cell(row.level, row.scale, row.baseline).unwrap().rmse;
            let imp = report.cell(row.level, row.scale, row.improved).unwrap().rmse;
            if base > 0.0 {
                assert!((row.percent - 100.0 * (1.0 - imp / base)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bad_settings_are_rejected() {
        let dataset = tiny_dataset();
        let mut configs = tiny_configs();
        configs.test_fraction = 0.0;
        assert!(run_experiment_matrix(&dataset, &configs).is_err());
        let mut configs = tiny_configs();
        configs.building_combined.heads = 1;
        assert!(run_experiment_matrix(&dataset, &configs).is_err());
        let mut configs = tiny_configs();
        configs.ap_separate[0].heads = 3;
        assert!(run_experiment_matrix(&dataset, &configs).is_err());
    }
}
