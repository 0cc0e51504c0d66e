//! The five workflow commands: ingest, train, forecast, compare, synth.
//!
//! Each command reads and writes the plain-text formats defined by the
//! library crate and drops a run manifest alongside its outputs.

use crate::manifest::RunManifest;
use crate::{CliError, CliResult};
use clap::ValueEnum;
use occucast::arima::{self, ArimaFitOptions, ArimaSpec};
use occucast::experiment::{
    best_access_point_costs, best_building_costs, cost_report, grid_search_series,
    parse_grid_spec, render_results_table, render_rmse_chart_svg, run_experiment_matrix,
    GridSearchOutcome, GridSpec, MatrixConfigs,
};
use occucast::ingest::{self, OccupancySeries, Scale, Scope, TimedSeries};
use occucast::lstm::{self, LstmConfig};
use occucast::preprocess::{fit_scaler, ScalerKind};
use occucast::synth::{generate_sessions, BuildingProfile, SynthDataset};
use occucast::Error;
use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

/// Interval width in minutes: 15, 30, or 60.
pub fn parse_scale(s: &str) -> Result<Scale, String> {
    s.parse::<u32>()
        .ok()
        .and_then(|m| Scale::from_minutes(m).ok())
        .ok_or_else(|| "scale must be 15, 30, or 60".to_string())
}

/// Aggregation target: `building` or `ap:<id>`.
pub fn parse_scope(s: &str) -> Result<Scope, String> {
    if s == "building" {
        return Ok(Scope::Building);
    }
    match s.split_once(':') {
        Some(("ap", id)) if !id.is_empty() => Ok(Scope::AccessPoint(id.to_string())),
        _ => Err("scope must be `building` or `ap:<id>`".to_string()),
    }
}

/// ARIMA order triple written as `p,d,q`.
pub fn parse_order(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    let invalid = || format!("expected `p,d,q` with non-negative integers, got {s:?}");
    if parts.len() != 3 {
        return Err(invalid());
    }
    let mut nums = [0usize; 3];
    for (slot, part) in nums.iter_mut().zip(&parts) {
        *slot = part.trim().parse().map_err(|_| invalid())?;
    }
    Ok((nums[0], nums[1], nums[2]))
}

/// The manifest written next to a single-file output.
fn manifest_path(out: &Path) -> PathBuf {
    PathBuf::from(format!("{}.manifest", out.display()))
}

fn read_series_file(path: &Path) -> CliResult<TimedSeries> {
    let file = File::open(path)
        .map_err(|e| Error::invalid(format!("cannot open {}: {e}", path.display())))?;
    ingest::read_series(BufReader::new(file))
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
        .map_err(CliError::from)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents)
        .map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())).into())
}

/// Forecast timestamps continue the history's uniform grid, so the
/// history must pin down its own step width.
fn require_step(series: &TimedSeries, label: &str) -> CliResult<i64> {
    if series.step_seconds <= 0 {
        return Err(Error::invalid(format!(
            "{label} needs at least two observations to define the interval width"
        ))
        .into());
    }
    Ok(series.step_seconds)
}

#[derive(clap::Args)]
pub struct IngestArgs {
    /// Raw session log (`start,duration,device,ap` with header).
    #[arg(long)]
    pub log: PathBuf,
    /// Interval width in minutes (15, 30, or 60).
    #[arg(long, value_parser = parse_scale)]
    pub scale: Scale,
    /// Aggregation target: `building` or `ap:<id>`.
    #[arg(long, value_parser = parse_scope)]
    pub scope: Scope,
    /// Cover `[start, end)` (epoch seconds, scale-aligned) instead of
    /// the log's own extent.
    #[arg(long, requires = "end")]
    pub start: Option<i64>,
    #[arg(long, requires = "start")]
    pub end: Option<i64>,
    /// Output series file; a `.manifest` record is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_ingest(args: &IngestArgs) -> CliResult<()> {
    let file = File::open(&args.log)
        .map_err(|e| Error::invalid(format!("cannot open {}: {e}", args.log.display())))?;
    let sessions = ingest::parse_sessions(BufReader::new(file))?;
    if let Scope::AccessPoint(id) = &args.scope {
        if !ingest::ap_ids(&sessions).iter().any(|known| known == id) {
            return Err(Error::invalid(format!(
                "scope not present in log: no sessions for ap:{id}"
            ))
            .into());
        }
    }
    let (t0, t1) = match (args.start, args.end) {
        (Some(t0), Some(t1)) => (t0, t1),
        _ => ingest::infer_range(&sessions, args.scale)?,
    };
    let series = ingest::count_occupancy(&sessions, args.scale, &args.scope, t0, t1)?;

    let mut buf = Vec::new();
    ingest::write_series(&series, &mut buf)?;
    write_file(&args.out, buf)?;

    let mut manifest = RunManifest::new("ingest");
    manifest.setting("scale_minutes", args.scale.minutes());
    manifest.setting("scope", &args.scope);
    manifest.setting("range_start", t0);
    manifest.setting("range_end", t1);
    manifest.input(&args.log)?;
    manifest.output(&args.out)?;
    manifest.write(&manifest_path(&args.out))?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Arima,
    Lstm,
}

/// One published column of LSTM sizings; all use batch 16, 1000 epochs.
#[derive(Debug)]
struct SizingColumn {
    neurons: usize,
    layers: usize,
    lag: usize,
    heads: usize,
}

static PUBLISHED_SIZINGS: &[(&str, SizingColumn)] = &[
    ("CombBuilding", SizingColumn { neurons: 32, layers: 2, lag: 24, heads: 3 }),
    ("Sep60Building", SizingColumn { neurons: 48, layers: 3, lag: 24, heads: 1 }),
    ("Sep30Building", SizingColumn { neurons: 32, layers: 3, lag: 48, heads: 1 }),
    ("Sep15Building", SizingColumn { neurons: 48, layers: 2, lag: 12, heads: 1 }),
    ("CombAP", SizingColumn { neurons: 32, layers: 3, lag: 4, heads: 3 }),
    ("Sep60AP", SizingColumn { neurons: 16, layers: 3, lag: 48, heads: 1 }),
    ("Sep30AP", SizingColumn { neurons: 48, layers: 2, lag: 24, heads: 1 }),
    ("Sep15AP", SizingColumn { neurons: 48, layers: 4, lag: 24, heads: 1 }),
];

fn resolve_preset(name: &str) -> CliResult<&'static SizingColumn> {
    name.strip_prefix("table1:")
        .and_then(|column| {
            PUBLISHED_SIZINGS
                .iter()
                .find(|(known, _)| *known == column)
                .map(|(_, sizing)| sizing)
        })
        .ok_or_else(|| {
            let valid: Vec<String> = PUBLISHED_SIZINGS
                .iter()
                .map(|(column, _)| format!("table1:{column}"))
                .collect();
            CliError::Usage(format!(
                "unknown preset {name:?}; valid presets: {}",
                valid.join(", ")
            ))
        })
}

#[derive(clap::Args)]
pub struct TrainArgs {
    /// Model family to fit.
    #[arg(long, value_enum)]
    pub model: ModelKind,
    /// Input series for single-scale models.
    #[arg(long, conflicts_with_all = ["series15", "series30", "series60"])]
    pub series: Option<PathBuf>,
    /// Per-scale inputs for the combined LSTM (all three required).
    #[arg(long, requires = "series30", requires = "series60")]
    pub series15: Option<PathBuf>,
    #[arg(long, requires = "series15", requires = "series60")]
    pub series30: Option<PathBuf>,
    #[arg(long, requires = "series15", requires = "series30")]
    pub series60: Option<PathBuf>,
    /// Named LSTM sizing, e.g. `table1:CombBuilding`; explicit flags
    /// override it.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub neurons: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub lag: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Differencing order applied before scaling (LSTM).
    #[arg(long, default_value_t = 1)]
    pub difference: usize,
    /// Seed for weight initialization and batch shuffling (LSTM).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// ARIMA order as `p,d,q`; omitted, the order is selected on a
    /// validation split.
    #[arg(long, value_parser = parse_order)]
    pub order: Option<(usize, usize, usize)>,
    /// Upper `p,d,q` bounds for ARIMA order selection.
    #[arg(long, value_parser = parse_order, default_value = "2,1,1")]
    pub max_order: (usize, usize, usize),
    /// Tail fraction of the series scored during order selection.
    #[arg(long, default_value_t = 0.2)]
    pub validation_fraction: f64,
    /// Fit ARIMA on log10(x+1)-transformed values.
    #[arg(long)]
    pub log: bool,
    /// Fix the ARIMA constant at zero (pure random walk with `0,1,0`).
    #[arg(long)]
    pub no_intercept: bool,
    /// Output model file; a `.manifest` record is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

/// LSTM shape from flags and the optional preset; explicit flags beat
/// the preset, which beats the defaults (16 neurons, 1 layer, lag 12,
/// batch 16, 100 epochs).
fn resolve_lstm_config(args: &TrainArgs) -> CliResult<LstmConfig> {
    let sizing = args.preset.as_deref().map(resolve_preset).transpose()?;
    let combined_inputs = args.series15.is_some();
    let heads = match sizing {
        Some(s) => s.heads,
        None if combined_inputs => 3,
        None => 1,
    };
    if heads == 3 && !combined_inputs {
        return Err(CliError::Usage(
            "combined training reads --series15, --series30, and --series60".to_string(),
        ));
    }
    if heads == 1 && combined_inputs {
        return Err(CliError::Usage(
            "single-scale training reads --series, not per-scale inputs".to_string(),
        ));
    }
    Ok(LstmConfig {
        neurons: args.neurons.or(sizing.map(|s| s.neurons)).unwrap_or(16),
        layers: args.layers.or(sizing.map(|s| s.layers)).unwrap_or(1),
        lag: args.lag.or(sizing.map(|s| s.lag)).unwrap_or(12),
        batch_size: args.batch_size.unwrap_or(16),
        epochs: args.epochs.or(sizing.map(|_| 1000)).unwrap_or(100),
        heads,
        peepholes: true,
        seed: args.seed,
    })
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    match args.model {
        ModelKind::Arima => train_arima(args),
        ModelKind::Lstm => train_lstm(args),
    }
}

fn train_arima(args: &TrainArgs) -> CliResult<()> {
    if args.preset.is_some() {
        return Err(CliError::Usage(
            "sizing presets configure LSTM training; pass --order for ARIMA".to_string(),
        ));
    }
    let path = args.series.as_ref().ok_or_else(|| {
        CliError::Usage("--series is required for ARIMA training".to_string())
    })?;
    let series = read_series_file(path)?;

    let scaler = if args.log {
        Some(fit_scaler(&series.values, ScalerKind::LogPlusOne)?)
    } else {
        None
    };
    let values = match &scaler {
        Some(s) => s.apply_slice(&series.values)?,
        None => series.values.clone(),
    };

    let searched = args.order.is_none();
    let spec = match args.order {
        Some((p, d, q)) => ArimaSpec::new(p, d, q),
        None => {
            let (p_max, d_max, q_max) = args.max_order;
            arima::select_order(&values, p_max, d_max, q_max, args.validation_fraction)?
        }
    };
    let options = ArimaFitOptions {
        include_intercept: !args.no_intercept,
        ..ArimaFitOptions::default()
    };
    let model = arima::fit_arima_with(&values, spec, options)?;
    write_file(&args.out, arima::write_model(&model, scaler.as_ref()))?;

    let mut manifest = RunManifest::new("train");
    manifest.setting("model", "arima");
    manifest.setting("order", spec);
    if searched {
        let (p_max, d_max, q_max) = args.max_order;
        manifest.setting("max_order", format!("({p_max},{d_max},{q_max})"));
        manifest.setting("validation_fraction", args.validation_fraction);
    }
    manifest.setting("log_transform", args.log);
    manifest.setting("include_intercept", !args.no_intercept);
    manifest.input(path)?;
    manifest.output(&args.out)?;
    manifest.write(&manifest_path(&args.out))?;
    Ok(())
}

fn train_lstm(args: &TrainArgs) -> CliResult<()> {
    let config = resolve_lstm_config(args)?;
    let mut manifest = RunManifest::new("train");
    manifest.setting("model", "lstm");
    if let Some(preset) = &args.preset {
        manifest.setting("preset", preset);
    }
    manifest.setting("neurons", config.neurons);
    manifest.setting("layers", config.layers);
    manifest.setting("lag", config.lag);
    manifest.setting("batch_size", config.batch_size);
    manifest.setting("epochs", config.epochs);
    manifest.setting("output_scales", config.heads);
    manifest.setting("difference", args.difference);
    manifest.setting("seed", args.seed);

    let model = if config.heads == 1 {
        let path = args.series.as_ref().ok_or_else(|| {
            CliError::Usage("--series is required for single-scale training".to_string())
        })?;
        manifest.input(path)?;
        let series = read_series_file(path)?;
        lstm::fit_series(&series.values, &config, args.difference)?
    } else {
        let paths = [&args.series15, &args.series30, &args.series60];
        let mut series = Vec::with_capacity(3);
        for path in paths {
            let path = path.as_ref().ok_or_else(|| {
                CliError::Usage(
                    "combined training reads --series15, --series30, and --series60"
                        .to_string(),
                )
            })?;
            manifest.input(path)?;
            series.push(read_series_file(path)?);
        }
        lstm::fit_multiscale(&series[0], &series[1], &series[2], &config, args.difference)?
    };

    write_file(&args.out, lstm::write_model(&model))?;
    manifest.output(&args.out)?;
    manifest.write(&manifest_path(&args.out))?;
    Ok(())
}

#[derive(clap::Args)]
pub struct ForecastArgs {
    /// Fitted model file from `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Recorded history for single-output models.
    #[arg(long, conflicts_with_all = ["history15", "history30", "history60"])]
    pub history: Option<PathBuf>,
    /// Per-scale history for combined models (all three required).
    #[arg(long, requires = "history30", requires = "history60")]
    pub history15: Option<PathBuf>,
    #[arg(long, requires = "history15", requires = "history60")]
    pub history30: Option<PathBuf>,
    #[arg(long, requires = "history15", requires = "history30")]
    pub history60: Option<PathBuf>,
    /// Number of future intervals to predict.
    #[arg(long)]
    pub horizon: usize,
    /// Output forecast file; a `.manifest` record is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_forecast(args: &ForecastArgs) -> CliResult<()> {
    let text = fs::read_to_string(&args.model)
        .map_err(|e| Error::invalid(format!("cannot open {}: {e}", args.model.display())))?;
    let mut manifest = RunManifest::new("forecast");
    manifest.setting("horizon", args.horizon);
    manifest.input(&args.model)?;

    let rendered = if text.starts_with("arima_v1") {
        forecast_with_arima(args, &text, &mut manifest)?
    } else if text.starts_with("lstm_v1") {
        forecast_with_lstm(args, &text, &mut manifest)?
    } else {
        return Err(Error::ModelFormat(format!(
            "{} is not a recognized model file (expected an arima_v1 or lstm_v1 header)",
            args.model.display()
        ))
        .into());
    };

    write_file(&args.out, rendered)?;
    manifest.output(&args.out)?;
    manifest.write(&manifest_path(&args.out))?;
    Ok(())
}

fn single_history(args: &ForecastArgs) -> CliResult<&PathBuf> {
    args.history.as_ref().ok_or_else(|| {
        CliError::Usage("--history is required for single-output models".to_string())
    })
}

fn render_forecast_rows(start: i64, step: i64, offset: usize, values: &[f64]) -> String {
    let mut out = String::from("interval_start,predicted_count\n");
    for (k, value) in values.iter().enumerate() {
        let t = start + (offset + k) as i64 * step;
        out.push_str(&format!("{t},{value}\n"));
    }
    out
}

fn forecast_with_arima(
    args: &ForecastArgs,
    text: &str,
    manifest: &mut RunManifest,
) -> CliResult<String> {
    let (model, scaler) = arima::read_model(text)?;
    let path = single_history(args)?;
    manifest.input(path)?;
    let history = read_series_file(path)?;
    let step = require_step(&history, "history")?;

    let transformed = match &scaler {
        Some(s) => s.apply_slice(&history.values)?,
        None => history.values.clone(),
    };
    let forecast = arima::forecast_arima(&model, &transformed, args.horizon)?;
    let forecast = match &scaler {
        Some(s) => s.invert_slice(&forecast),
        None => forecast,
    };
    Ok(render_forecast_rows(
        history.start,
        step,
        history.values.len(),
        &forecast,
    ))
}

fn forecast_with_lstm(
    args: &ForecastArgs,
    text: &str,
    manifest: &mut RunManifest,
) -> CliResult<String> {
    let model = lstm::read_model(text)?;
    if model.config.heads == 1 {
        let path = single_history(args)?;
        manifest.input(path)?;
        let history = read_series_file(path)?;
        let step = require_step(&history, "history")?;
        let forecast = lstm::predict_series(&model, &history.values, args.horizon)?;
        return Ok(render_forecast_rows(
            history.start,
            step,
            history.values.len(),
            &forecast,
        ));
    }

    let paths = [&args.history15, &args.history30, &args.history60];
    let mut histories = Vec::with_capacity(3);
    for path in paths {
        let path = path.as_ref().ok_or_else(|| {
            CliError::Usage(
                "combined models read --history15, --history30, and --history60".to_string(),
            )
        })?;
        manifest.input(path)?;
        histories.push(read_series_file(path)?);
    }
    let step60 = require_step(&histories[2], "60-minute history")?;
    let per_scale = lstm::predict_multiscale(
        &model,
        &histories[0].values,
        &histories[1].values,
        &histories[2].values,
        args.horizon,
    )?;

    // One row per 60-minute anchor carrying all three scales' predictions.
    let mut out =
        String::from("interval_start,predicted_count_15,predicted_count_30,predicted_count_60\n");
    let first_anchor = histories[2].start + histories[2].values.len() as i64 * step60;
    let rows = per_scale[0].iter().zip(&per_scale[1]).zip(&per_scale[2]);
    for (k, ((p15, p30), p60)) in rows.enumerate() {
        let t = first_anchor + k as i64 * step60;
        out.push_str(&format!("{t},{p15},{p30},{p60}\n"));
    }
    Ok(out)
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ComparePreset {
    /// Desk-scale sizings for the bundled synthetic benchmark.
    Benchmark,
    /// Published best sizings; hours of single-core compute.
    Published,
}

#[derive(clap::Args)]
pub struct CompareArgs {
    /// Dataset directory laid out like `synth` output.
    #[arg(long, required_unless_present = "cost_only")]
    pub data: Option<PathBuf>,
    /// Output directory for the report files (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Write the parameter-cost report only; skip all training.
    #[arg(long)]
    pub cost_only: bool,
    /// Model sizings to run.
    #[arg(long, value_enum, default_value_t = ComparePreset::Benchmark)]
    pub preset: ComparePreset,
    /// Pick the LSTM sizing by grid search over this spec file instead
    /// of the preset sizings.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Override the preset's base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the held-out tail fraction.
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

/// Parameter counts for the published best sizings at both levels.
fn render_cost_report() -> CliResult<String> {
    let (separate, combined) = best_building_costs();
    let building = cost_report(&separate, &combined)?;
    let (separate, combined) = best_access_point_costs();
    let access_point = cost_report(&separate, &combined)?;

    let mut out = String::new();
    for (label, report) in [("building", &building), ("access point", &access_point)] {
        let parts: Vec<String> = report.separate.iter().map(|n| n.to_string()).collect();
        out.push_str(&format!(
            "{label} separate neuron counts (15/30/60 min): {} = {}\n",
            parts.join(" + "),
            report.separate_total
        ));
        out.push_str(&format!(
            "{label} combined neuron count: {}\n",
            report.combined
        ));
        out.push_str(&format!(
            "{label} reduction: {:.2}%\n",
            report.reduction_percent
        ));
    }
    Ok(out)
}

/// `building_60.csv` / `ap_AP01_15.csv` style names inside dataset dirs.
fn series_file_name(scope: &Scope, scale: Scale) -> String {
    match scope {
        Scope::Building => format!("building_{}.csv", scale.minutes()),
        Scope::AccessPoint(id) => format!("ap_{id}_{}.csv", scale.minutes()),
    }
}

/// Inverse of [`series_file_name`]; `None` for files that are not part
/// of the layout.
fn parse_series_name(name: &str) -> Option<(Scope, Scale)> {
    let stem = name.strip_suffix(".csv")?;
    let (scope_part, scale_part) = stem.rsplit_once('_')?;
    let scale = Scale::from_minutes(scale_part.parse().ok()?).ok()?;
    if scope_part == "building" {
        return Some((Scope::Building, scale));
    }
    let id = scope_part.strip_prefix("ap_")?;
    if id.is_empty() {
        return None;
    }
    Some((Scope::AccessPoint(id.to_string()), scale))
}

/// Reconstruct a counts series from a real-valued file, rejecting
/// anything that cannot be an occupancy count.
fn counts_from_timed(
    timed: TimedSeries,
    scope: Scope,
    scale: Scale,
) -> CliResult<OccupancySeries> {
    let width = scale.seconds();
    if timed.values.len() >= 2 && timed.step_seconds != width {
        return Err(Error::invalid(format!(
            "{scope} {}-minute series steps by {} seconds, expected {width}",
            scale.minutes(),
            timed.step_seconds
        ))
        .into());
    }
    if timed.start % width != 0 {
        return Err(Error::invalid(format!(
            "{scope} {}-minute series starts at {}, which is not interval-aligned",
            scale.minutes(),
            timed.start
        ))
        .into());
    }
    let mut counts = Vec::with_capacity(timed.values.len());
    for &value in &timed.values {
        if !value.is_finite() || value < 0.0 || value.fract() != 0.0 || value > u32::MAX as f64 {
            return Err(Error::invalid(format!(
                "{scope} {}-minute series contains non-count value {value}",
                scale.minutes()
            ))
            .into());
        }
        counts.push(value as u32);
    }
    Ok(OccupancySeries {
        scale,
        scope,
        start: timed.start,
        counts,
    })
}

/// Read a `synth`-layout directory back into an evaluation dataset.
fn load_dataset_dir(dir: &Path, manifest: &mut RunManifest) -> CliResult<SynthDataset> {
    let entries = fs::read_dir(dir)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", dir.display())))?;
    let mut found: BTreeMap<String, BTreeSet<u32>> = BTreeMap::new();
    let mut saw_building = false;
    for entry in entries {
        let entry = entry.map_err(Error::from)?;
        let name = entry.file_name();
        let Some((scope, scale)) = name.to_str().and_then(parse_series_name) else {
            continue;
        };
        match scope {
            Scope::Building => saw_building = true,
            Scope::AccessPoint(id) => {
                found.entry(id).or_default().insert(scale.minutes());
            }
        }
    }
    if !saw_building {
        return Err(Error::invalid(format!(
            "no building series (building_15/30/60.csv) found in {}",
            dir.display()
        ))
        .into());
    }
    if found.is_empty() {
        return Err(Error::invalid(format!(
            "no access-point series (ap_<id>_<scale>.csv) found in {}",
            dir.display()
        ))
        .into());
    }

    let ap_ids: Vec<String> = found.keys().cloned().collect();
    let mut scopes = vec![Scope::Building];
    scopes.extend(ap_ids.iter().cloned().map(Scope::AccessPoint));

    let mut truth = Vec::with_capacity(scopes.len() * 3);
    let mut extent: Option<(i64, i64)> = None;
    for scope in &scopes {
        for scale in Scale::ALL {
            let path = dir.join(series_file_name(scope, scale));
            if !path.exists() {
                return Err(Error::invalid(format!(
                    "missing {}-minute series for {scope} in {}",
                    scale.minutes(),
                    dir.display()
                ))
                .into());
            }
            manifest.input(&path)?;
            let series = counts_from_timed(read_series_file(&path)?, scope.clone(), scale)?;
            let this = (series.start, series.end());
            match extent {
                None => extent = Some(this),
                Some(seen) if seen == this => {}
                Some(seen) => {
                    return Err(Error::invalid(format!(
                        "{scope} {}-minute series covers [{}, {}) but other series cover [{}, {})",
                        scale.minutes(),
                        this.0,
                        this.1,
                        seen.0,
                        seen.1
                    ))
                    .into());
                }
            }
            truth.push(series);
        }
    }
    let (start, end) = extent.expect("at least one series was read");
    Ok(SynthDataset {
        sessions: Vec::new(),
        start,
        end,
        ap_ids,
        truth,
    })
}

/// Replace every LSTM sizing with the grid's best candidate (one output
/// for separate cells, three for combined cells).
fn pick_sizings_by_grid(
    dataset: &SynthDataset,
    grid: &GridSpec,
    configs: &mut MatrixConfigs,
) -> CliResult<GridSearchOutcome> {
    let building60 = dataset
        .truth_for(&Scope::Building, Scale::M60)
        .expect("dataset loader guarantees the building series");
    let values: Vec<f64> = building60.counts.iter().map(|&c| c as f64).collect();
    let held_out = ((configs.test_fraction * values.len() as f64).ceil() as usize).max(1);
    if held_out >= values.len() {
        return Err(Error::invalid("test fraction leaves no training span").into());
    }
    let outcome = grid_search_series(
        grid,
        &values[..values.len() - held_out],
        configs.arima_validation_fraction,
        configs.difference_order,
    )?;

    let separate = outcome.best.clone();
    let mut combined = separate.clone();
    combined.heads = 3;
    configs.building_separate = [separate.clone(), separate.clone(), separate.clone()];
    configs.ap_separate = [separate.clone(), separate.clone(), separate.clone()];
    configs.building_combined = combined.clone();
    configs.ap_combined = combined;
    Ok(outcome)
}

fn render_grid_candidates(outcome: &GridSearchOutcome) -> String {
    let mut out =
        String::from("neurons\tlayers\tlag\tbatch_size\tepochs\tneuron_count\tvalidation_rmse\n");
    for candidate in &outcome.candidates {
        let score = match candidate.validation_rmse {
            Some(r) => format!("{r:.4}"),
            None => "failed".to_string(),
        };
        let c = &candidate.config;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{score}\n",
            c.neurons, c.layers, c.lag, c.batch_size, c.epochs, candidate.neuron_count
        ));
    }
    out
}

pub fn cmd_compare(args: &CompareArgs) -> CliResult<()> {
    fs::create_dir_all(&args.out)
        .map_err(|e| Error::invalid(format!("cannot create {}: {e}", args.out.display())))?;
    let mut manifest = RunManifest::new("compare");
    manifest.setting("cost_only", args.cost_only);

    let cost = render_cost_report()?;
    let cost_path = args.out.join("cost_report.txt");
    write_file(&cost_path, &cost)?;

    if args.cost_only {
        manifest.output(&cost_path)?;
        manifest.write(&args.out.join("manifest.txt"))?;
        print!("{cost}");
        return Ok(());
    }

    let data = args
        .data
        .as_ref()
        .expect("clap requires --data unless --cost-only");
    let mut configs = match args.preset {
        ComparePreset::Benchmark => MatrixConfigs::benchmark(),
        ComparePreset::Published => MatrixConfigs::published_best(),
    };
    manifest.setting(
        "preset",
        match args.preset {
            ComparePreset::Benchmark => "benchmark",
            ComparePreset::Published => "published",
        },
    );
    if let Some(seed) = args.seed {
        configs.seed = seed;
    }
    if let Some(fraction) = args.test_fraction {
        configs.test_fraction = fraction;
    }
    manifest.setting("seed", configs.seed);
    manifest.setting("test_fraction", configs.test_fraction);

    let dataset = load_dataset_dir(data, &mut manifest)?;

    let grid_table = match &args.grid {
        Some(grid_path) => {
            manifest.input(grid_path)?;
            let text = fs::read_to_string(grid_path).map_err(|e| {
                Error::invalid(format!("cannot open {}: {e}", grid_path.display()))
            })?;
            let grid = parse_grid_spec(&text)?;
            let outcome = pick_sizings_by_grid(&dataset, &grid, &mut configs)?;
            Some(render_grid_candidates(&outcome))
        }
        None => None,
    };

    let report = run_experiment_matrix(&dataset, &configs)?;

    manifest.output(&cost_path)?;
    if let Some(table) = grid_table {
        let grid_path = args.out.join("grid_results.tsv");
        write_file(&grid_path, table)?;
        manifest.output(&grid_path)?;
    }
    let table = render_results_table(&report);
    let table_path = args.out.join("results.tsv");
    write_file(&table_path, &table)?;
    manifest.output(&table_path)?;
    let chart_path = args.out.join("rmse_chart.svg");
    write_file(&chart_path, render_rmse_chart_svg(&report))?;
    manifest.output(&chart_path)?;
    manifest.write(&args.out.join("manifest.txt"))?;

    print!("{table}");
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfilePreset {
    /// Campus-sized: 18 APs over 42 days.
    Default,
    /// The fixed benchmark dataset: 4 APs over 28 days.
    Benchmark,
}

#[derive(clap::Args)]
pub struct SynthArgs {
    /// Base generator profile.
    #[arg(long, value_enum, default_value_t = ProfilePreset::Default)]
    pub preset: ProfilePreset,
    /// Override the preset's access-point count.
    #[arg(long)]
    pub aps: Option<usize>,
    /// Override the number of simulated days.
    #[arg(long)]
    pub days: Option<usize>,
    /// Override the first simulated instant (epoch seconds, midnight-aligned).
    #[arg(long)]
    pub start: Option<i64>,
    /// Override the weekend activity multiplier.
    #[arg(long)]
    pub weekend_scale: Option<f64>,
    /// Override the mean session length in minutes.
    #[arg(long)]
    pub session_mean: Option<f64>,
    /// Override the arrival dispersion (0 gives pure Poisson counts).
    #[arg(long)]
    pub noise: Option<f64>,
    /// Override the generator seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let mut profile = match args.preset {
        ProfilePreset::Default => BuildingProfile::default_preset(),
        ProfilePreset::Benchmark => BuildingProfile::benchmark_preset(),
    };
    if let Some(aps) = args.aps {
        profile.ap_count = aps;
    }
    if let Some(days) = args.days {
        profile.days = days;
    }
    if let Some(start) = args.start {
        profile.start = start;
    }
    if let Some(weekend_scale) = args.weekend_scale {
        profile.weekend_scale = weekend_scale;
    }
    if let Some(session_mean) = args.session_mean {
        profile.session_mean_minutes = session_mean;
    }
    if let Some(noise) = args.noise {
        profile.noise = noise;
    }
    if let Some(seed) = args.seed {
        profile.seed = seed;
    }

    let dataset = generate_sessions(&profile)?;
    fs::create_dir_all(&args.out)
        .map_err(|e| Error::invalid(format!("cannot create {}: {e}", args.out.display())))?;

    let mut manifest = RunManifest::new("synth");
    manifest.setting(
        "preset",
        match args.preset {
            ProfilePreset::Default => "default",
            ProfilePreset::Benchmark => "benchmark",
        },
    );
    manifest.setting("ap_count", profile.ap_count);
    manifest.setting("days", profile.days);
    manifest.setting("start", profile.start);
    manifest.setting("weekend_scale", profile.weekend_scale);
    manifest.setting("session_mean_minutes", profile.session_mean_minutes);
    manifest.setting("noise", profile.noise);
    manifest.setting("seed", profile.seed);

    let sessions_path = args.out.join("sessions.csv");
    let mut buf = Vec::new();
    ingest::write_sessions(&dataset.sessions, &mut buf)?;
    write_file(&sessions_path, buf)?;
    manifest.output(&sessions_path)?;

    for series in &dataset.truth {
        let path = args.out.join(series_file_name(&series.scope, series.scale));
        let mut buf = Vec::new();
        ingest::write_series(series, &mut buf)?;
        write_file(&path, buf)?;
        manifest.output(&path)?;
    }
    manifest.write(&args.out.join("manifest.txt"))?;
    Ok(())
}
