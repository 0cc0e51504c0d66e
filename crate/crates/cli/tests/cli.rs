//! End-to-end checks of the command binary: workflows, file formats,
//! exit codes, and seed reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn occucast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_occucast"))
        .args(args)
        .env("OCCU_THREADS", "3")
        .output()
        .expect("binary runs")
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("process not killed by signal")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn assert_ok(output: &Output) {
    assert_eq!(code(output), 0, "stderr:\n{}", stderr(output));
}

/// File contents with the manifest timestamp line removed.
fn stable_lines(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
        .lines()
        .filter(|l| !l.starts_with("timestamp_unix "))
        .collect::<Vec<_>>()
        .join("\n")
}

fn write_series_file(path: &Path, start: i64, step: i64, values: &[f64]) {
    let mut text = String::new();
    for (k, v) in values.iter().enumerate() {
        text.push_str(&format!("{},{v}\n", start + k as i64 * step));
    }
    fs::write(path, text).unwrap();
}

fn sine_counts(len: usize, period: f64, level: f64, amplitude: f64) -> Vec<f64> {
    (0..len)
        .map(|t| (level + amplitude * (std::f64::consts::TAU * t as f64 / period).sin()).round())
        .collect()
}

#[test]
fn help_version_and_usage_errors_use_the_documented_exit_codes() {
    assert_eq!(code(&occucast(&["--help"])), 0);
    assert!(stdout(&occucast(&["--help"])).contains("ingest"));
    assert_eq!(code(&occucast(&["--version"])), 0);
    assert_eq!(code(&occucast(&["--nope"])), 1);
    assert_eq!(code(&occucast(&["retrain"])), 1);
    // Missing required flags is a usage error too.
    assert_eq!(code(&occucast(&["train"])), 1);
}

#[test]
fn ingest_buckets_distinct_devices_per_interval() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("sessions.csv");
    fs::write(
        &log,
        "start,duration,device,ap\n\
         0,1800,alice,AP01\n\
         1800,5400,bob,AP01\n\
         3600,600,alice,AP02\n",
    )
    .unwrap();

    let out = dir.path().join("building_60.csv");
    let run = occucast(&[
        "ingest",
        "--log",
        log.to_str().unwrap(),
        "--scale",
        "60",
        "--scope",
        "building",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ok(&run);
    // Inferred range [0, 7200): both devices present in both hours.
    assert_eq!(fs::read_to_string(&out).unwrap(), "0,2\n3600,2\n");
    let manifest = fs::read_to_string(dir.path().join("building_60.csv.manifest")).unwrap();
    assert!(manifest.contains("command ingest"));
    assert!(manifest.contains("input sessions.csv sha256 "));
    assert!(manifest.contains("output building_60.csv sha256 "));

    let ap_out = dir.path().join("ap2_60.csv");
    let run = occucast(&[
        "ingest",
        "--log",
        log.to_str().unwrap(),
        "--scale",
        "60",
        "--scope",
        "ap:AP02",
        "--out",
        ap_out.to_str().unwrap(),
    ]);
    assert_ok(&run);
    assert_eq!(fs::read_to_string(&ap_out).unwrap(), "0,0\n3600,1\n");
}

#[test]
fn ingest_rejects_scopes_missing_from_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.csv");
    fs::write(&log, "start,duration,device,ap\n0,60,alice,AP01\n").unwrap();
    let run = occucast(&[
        "ingest",
        "--log",
        log.to_str().unwrap(),
        "--scale",
        "15",
        "--scope",
        "ap:nope",
        "--out",
        dir.path().join("out.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 2);
    assert!(stderr(&run).contains("scope not present in log"), "{}", stderr(&run));
}

#[test]
fn ingest_of_an_empty_log_needs_an_explicit_range() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.csv");
    fs::write(&log, "start,duration,device,ap\n").unwrap();
    let out = dir.path().join("out.csv");

    let run = occucast(&[
        "ingest",
        "--log",
        log.to_str().unwrap(),
        "--scale",
        "60",
        "--scope",
        "building",
        "--start",
        "0",
        "--end",
        "10800",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ok(&run);
    assert_eq!(fs::read_to_string(&out).unwrap(), "0,0\n3600,0\n7200,0\n");

    // No range and nothing to infer one from.
    let run = occucast(&[
        "ingest",
        "--log",
        log.to_str().unwrap(),
        "--scale",
        "60",
        "--scope",
        "building",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 2);

    // A misaligned explicit range is a data error.
    let run = occucast(&[
        "ingest",
        "--log",
        log.to_str().unwrap(),
        "--scale",
        "60",
        "--scope",
        "building",
        "--start",
        "7",
        "--end",
        "3607",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 2);
}

#[test]
fn random_walk_arima_forecasts_the_last_observation_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let history = dir.path().join("history.csv");
    let values: Vec<f64> = [
        5, 6, 8, 7, 9, 10, 9, 8, 8, 9, 11, 12, 11, 10, 9, 10, 12, 13, 12, 11, 10, 11, 13, 14, 13,
        12, 11, 12, 14, 15, 14, 13, 12, 13, 15, 16, 15, 14, 13, 14, 16, 17, 16, 15, 14, 15, 17,
        18, 17, 16, 15, 16, 18, 19, 18, 17, 16, 17, 19, 21,
    ]
    .iter()
    .map(|&v| v as f64)
    .collect();
    write_series_file(&history, 0, 900, &values);

    let model = dir.path().join("model.txt");
    let run = occucast(&[
        "train",
        "--model",
        "arima",
        "--series",
        history.to_str().unwrap(),
        "--order",
        "0,1,0",
        "--no-intercept",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_ok(&run);
    assert!(fs::read_to_string(&model).unwrap().starts_with("arima_v1"));

    let forecast = dir.path().join("forecast.csv");
    let run = occucast(&[
        "forecast",
        "--model",
        model.to_str().unwrap(),
        "--history",
        history.to_str().unwrap(),
        "--horizon",
        "3",
        "--out",
        forecast.to_str().unwrap(),
    ]);
    assert_ok(&run);
    let text = fs::read_to_string(&forecast).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "interval_start,predicted_count");
    assert_eq!(lines.len(), 4);
    for (k, line) in lines[1..].iter().enumerate() {
        let (t, v) = line.split_once(',').unwrap();
        assert_eq!(t.parse::<i64>().unwrap(), (60 + k as i64) * 900);
        assert_eq!(v.parse::<f64>().unwrap(), 21.0, "forecast row {line}");
    }

    // Horizon zero produces the header alone.
    let run = occucast(&[
        "forecast",
        "--model",
        model.to_str().unwrap(),
        "--history",
        history.to_str().unwrap(),
        "--horizon",
        "0",
        "--out",
        forecast.to_str().unwrap(),
    ]);
    assert_ok(&run);
    assert_eq!(
        fs::read_to_string(&forecast).unwrap(),
        "interval_start,predicted_count\n"
    );
}

#[test]
fn arima_order_selection_records_its_choice_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("series.csv");
    write_series_file(&series, 0, 1800, &sine_counts(120, 48.0, 20.0, 8.0));

    let model = dir.path().join("model.txt");
    let train = |out: &Path| {
        occucast(&[
            "train",
            "--model",
            "arima",
            "--series",
            series.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
    };
    assert_ok(&train(&model));
    let manifest = fs::read_to_string(dir.path().join("model.txt.manifest")).unwrap();
    assert!(manifest.contains("setting order ("), "{manifest}");
    assert!(manifest.contains("setting max_order (2,1,1)"), "{manifest}");

    let rerun = dir.path().join("model2.txt");
    assert_ok(&train(&rerun));
    assert_eq!(
        fs::read(&model).unwrap(),
        fs::read(&rerun).unwrap(),
        "training is deterministic"
    );
    assert_eq!(
        stable_lines(&dir.path().join("model.txt.manifest")),
        stable_lines(&dir.path().join("model2.txt.manifest"))
            .replace("model2.txt", "model.txt"),
    );
}

#[test]
fn lstm_preset_training_is_seed_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("series.csv");
    write_series_file(&series, 0, 1800, &sine_counts(160, 48.0, 12.0, 5.0));

    let train = |out: &Path, seed: &str| {
        occucast(&[
            "train",
            "--model",
            "lstm",
            "--series",
            series.to_str().unwrap(),
            "--preset",
            "table1:Sep30AP",
            "--epochs",
            "2",
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ])
    };
    let first = dir.path().join("a.txt");
    let second = dir.path().join("b.txt");
    let other = dir.path().join("c.txt");
    assert_ok(&train(&first, "3"));
    assert_ok(&train(&second, "3"));
    assert_ok(&train(&other, "4"));

    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
    assert_ne!(fs::read(&first).unwrap(), fs::read(&other).unwrap());

    let model = occucast::lstm::read_model(&fs::read_to_string(&first).unwrap()).unwrap();
    assert_eq!(model.config.neurons, 48);
    assert_eq!(model.config.layers, 2);
    assert_eq!(model.config.lag, 24);
    assert_eq!(model.config.batch_size, 16);
    assert_eq!(model.config.epochs, 2);
    assert_eq!(model.config.heads, 1);
}

#[test]
fn unknown_presets_are_usage_errors_listing_the_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("series.csv");
    write_series_file(&series, 0, 1800, &sine_counts(80, 48.0, 12.0, 5.0));
    let run = occucast(&[
        "train",
        "--model",
        "lstm",
        "--series",
        series.to_str().unwrap(),
        "--preset",
        "table1:Nope",
        "--out",
        dir.path().join("m.txt").to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 1);
    let err = stderr(&run);
    assert!(err.contains("table1:CombBuilding"), "{err}");
    assert!(err.contains("table1:Sep15AP"), "{err}");
}

#[test]
fn combined_lstm_forecasts_all_three_scales_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let s15 = dir.path().join("b15.csv");
    let s30 = dir.path().join("b30.csv");
    let s60 = dir.path().join("b60.csv");
    write_series_file(&s15, 0, 900, &sine_counts(240, 96.0, 20.0, 8.0));
    write_series_file(&s30, 0, 1800, &sine_counts(120, 48.0, 20.0, 8.0));
    write_series_file(&s60, 0, 3600, &sine_counts(60, 24.0, 20.0, 8.0));

    let model = dir.path().join("model.txt");
    let run = occucast(&[
        "train",
        "--model",
        "lstm",
        "--series15",
        s15.to_str().unwrap(),
        "--series30",
        s30.to_str().unwrap(),
        "--series60",
        s60.to_str().unwrap(),
        "--neurons",
        "4",
        "--lag",
        "4",
        "--epochs",
        "2",
        "--seed",
        "1",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_ok(&run);

    let forecast = dir.path().join("forecast.csv");
    let run = occucast(&[
        "forecast",
        "--model",
        model.to_str().unwrap(),
        "--history15",
        s15.to_str().unwrap(),
        "--history30",
        s30.to_str().unwrap(),
        "--history60",
        s60.to_str().unwrap(),
        "--horizon",
        "2",
        "--out",
        forecast.to_str().unwrap(),
    ]);
    assert_ok(&run);
    let text = fs::read_to_string(&forecast).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "interval_start,predicted_count_15,predicted_count_30,predicted_count_60"
    );
    assert_eq!(lines.len(), 3);
    for (k, line) in lines[1..].iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 4, "row {line}");
        assert_eq!(fields[0].parse::<i64>().unwrap(), (60 + k as i64) * 3600);
        for value in &fields[1..] {
            assert!(value.parse::<f64>().unwrap().is_finite());
        }
    }

    // A single-scale history cannot drive a combined model.
    let run = occucast(&[
        "forecast",
        "--model",
        model.to_str().unwrap(),
        "--history",
        s60.to_str().unwrap(),
        "--horizon",
        "1",
        "--out",
        forecast.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 1);
}

#[test]
fn unrecognized_model_files_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.txt");
    fs::write(&model, "gradient boosted stumps v9\n").unwrap();
    let history = dir.path().join("h.csv");
    write_series_file(&history, 0, 900, &[1.0, 2.0, 3.0]);
    let run = occucast(&[
        "forecast",
        "--model",
        model.to_str().unwrap(),
        "--history",
        history.to_str().unwrap(),
        "--horizon",
        "1",
        "--out",
        dir.path().join("f.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 2);
    assert!(stderr(&run).contains("not a recognized model file"), "{}", stderr(&run));
}

fn synth_into(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["synth", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    occucast(&args)
}

#[test]
fn synth_is_bit_reproducible_per_seed() {
    let base = tempfile::tempdir().unwrap();
    let a = base.path().join("a");
    let b = base.path().join("b");
    let c = base.path().join("c");
    let flags = ["--preset", "benchmark", "--aps", "2", "--days", "3", "--seed", "7"];
    assert_ok(&synth_into(&a, &flags));
    assert_ok(&synth_into(&b, &flags));
    assert_ok(&synth_into(
        &c,
        &["--preset", "benchmark", "--aps", "2", "--days", "3", "--seed", "8"],
    ));

    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    // sessions.csv + 3 scopes x 3 scales + manifest.txt
    assert_eq!(names.len(), 11, "{names:?}");
    for name in &names {
        if name == "manifest.txt" {
            assert_eq!(stable_lines(&a.join(name)), stable_lines(&b.join(name)));
        } else {
            assert_eq!(
                fs::read(a.join(name)).unwrap(),
                fs::read(b.join(name)).unwrap(),
                "{name} differs between identical seeds"
            );
        }
    }
    assert_ne!(
        fs::read(a.join("sessions.csv")).unwrap(),
        fs::read(c.join("sessions.csv")).unwrap(),
        "seed must matter"
    );
    assert_eq!(
        fs::read_to_string(a.join("building_60.csv")).unwrap().lines().count(),
        72
    );
}

#[test]
fn synth_defaults_cover_eighteen_aps_and_six_weeks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("campus");
    assert_ok(&synth_into(&out, &[]));
    assert!(out.join("ap_AP01_15.csv").exists());
    assert!(out.join("ap_AP18_60.csv").exists());
    assert!(!out.join("ap_AP19_60.csv").exists());
    assert_eq!(
        fs::read_to_string(out.join("building_60.csv")).unwrap().lines().count(),
        42 * 24
    );
}

#[test]
fn synth_rejects_an_empty_span() {
    let dir = tempfile::tempdir().unwrap();
    let run = synth_into(&dir.path().join("x"), &["--days", "0"]);
    assert_eq!(code(&run), 2);
}

#[test]
fn compare_cost_only_skips_training() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report");
    let run = occucast(&["compare", "--cost-only", "--out", out.to_str().unwrap()]);
    assert_ok(&run);
    let cost = fs::read_to_string(out.join("cost_report.txt")).unwrap();
    for token in ["109 + 145 + 169 = 423", "139", "67.14", "217 + 121 + 97 = 435", "111", "74.48"] {
        assert!(cost.contains(token), "missing {token} in:\n{cost}");
    }
    assert!(stdout(&run).contains("67.14"));
    assert!(!out.join("results.tsv").exists());
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("setting cost_only true"));

    // Without --cost-only the dataset directory is required.
    let run = occucast(&["compare", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&run), 1);
}

#[test]
fn compare_names_a_missing_scale() {
    let base = tempfile::tempdir().unwrap();
    let data = base.path().join("data");
    assert_ok(&synth_into(
        &data,
        &["--preset", "benchmark", "--aps", "2", "--days", "3", "--seed", "5"],
    ));
    fs::remove_file(data.join("ap_AP02_30.csv")).unwrap();
    let run = occucast(&[
        "compare",
        "--data",
        data.to_str().unwrap(),
        "--out",
        base.path().join("report").to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 2);
    let err = stderr(&run);
    assert!(err.contains("30-minute"), "{err}");
    assert!(err.contains("ap:AP02"), "{err}");
}

#[test]
fn compare_emits_table_chart_and_cost_report() {
    let base = tempfile::tempdir().unwrap();
    let data = base.path().join("data");
    assert_ok(&synth_into(
        &data,
        &["--preset", "benchmark", "--aps", "2", "--days", "6", "--seed", "5"],
    ));
    let out = base.path().join("report");
    let run = occucast(&[
        "compare",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ok(&run);

    let table = fs::read_to_string(out.join("results.tsv")).unwrap();
    let cells: Vec<&str> = table.lines().take_while(|l| !l.is_empty()).collect();
    assert_eq!(cells.len(), 19, "header plus 18 cells:\n{table}");
    for family in ["ARIMA", "LSTM-separate", "LSTM-combined"] {
        assert!(table.contains(family), "{table}");
    }
    assert!(stdout(&run).contains("LSTM-combined"));

    let chart = fs::read_to_string(out.join("rmse_chart.svg")).unwrap();
    assert!(chart.contains("<svg"));
    assert_eq!(chart.matches("class=\"bar\"").count(), 18);

    assert!(out.join("cost_report.txt").exists());
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("output results.tsv sha256 "));
    assert!(manifest.contains("output rmse_chart.svg sha256 "));
    assert!(manifest.contains("input building_15.csv sha256 "));
}

#[test]
fn compare_grid_search_reports_every_candidate() {
    let base = tempfile::tempdir().unwrap();
    let data = base.path().join("data");
    assert_ok(&synth_into(
        &data,
        &["--preset", "benchmark", "--aps", "2", "--days", "3", "--seed", "6"],
    ));
    let grid = base.path().join("grid.txt");
    fs::write(
        &grid,
        "# one tiny candidate\nneurons 4\nlayers 1\nlags 8\nbatch_sizes 16\nepochs 6\nseed 3\n",
    )
    .unwrap();
    let out = base.path().join("report");
    let run = occucast(&[
        "compare",
        "--data",
        data.to_str().unwrap(),
        "--grid",
        grid.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ok(&run);

    let candidates = fs::read_to_string(out.join("grid_results.tsv")).unwrap();
    let lines: Vec<&str> = candidates.lines().collect();
    assert_eq!(lines.len(), 2, "{candidates}");
    assert!(lines[0].starts_with("neurons\tlayers\tlag"));
    assert!(lines[1].starts_with("4\t1\t8\t16\t6\t"));
    assert!(out.join("results.tsv").exists());
}
