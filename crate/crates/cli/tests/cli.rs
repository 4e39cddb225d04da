use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use chrono::{Duration, NaiveDate};
use serde_json::Value;

fn epiecon(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epiecon"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn error_json(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("stderr has an error line");
    serde_json::from_str(line).expect("last stderr line is JSON")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const TINY_CONFIG: &str = "
[train]
max_sweeps = 1
[train.architecture]
hidden = 4
demo_hidden = 2
inner_hidden = 4
[train.mobility]
max_epochs = 20
[train.unemployment]
max_epochs = 20
[train.infection]
max_epochs = 20
";

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = epiecon(&[], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = epiecon(&["--no-such-flag", "policy"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["class"], "usage");
}

#[test]
fn help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let out = epiecon(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = epiecon(&["calibrate"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let err = error_json(&out);
    assert_eq!(err["error"]["class"], "data");
    assert_eq!(err["error"]["kind"], "io");
    assert_eq!(err["schema_version"], 1);
}

#[test]
fn bad_config_key_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "no_such_key = 1\n").unwrap();
    let out = epiecon(&["--config", "c.toml", "calibrate"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["error"]["kind"], "config");
}

#[test]
fn out_of_range_policy_window_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(epiecon(&["synth", "--days", "60", "--out-dir", "d"], dir.path())
        .status
        .success());
    let out = epiecon(
        &[
            "policy",
            "--data-dir",
            "d",
            "--bundle",
            "d/truth_bundle.json",
            "--start",
            "2021-01-01",
            "--end",
            "2021-01-02",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["error"]["kind"], "range");
}

#[test]
fn forecast_on_synthetic_panel_reports_four_finite_metrics_per_target() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), TINY_CONFIG).unwrap();
    assert!(epiecon(&["synth", "--days", "84", "--out-dir", "d"], dir.path())
        .status
        .success());
    let out = epiecon(
        &["forecast", "--config", "tiny.toml", "--data-dir", "d", "--out-dir", "f"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = read_json(&dir.path().join("f/metrics.json"));
    assert_eq!(metrics["schema_version"], 1);
    assert_eq!(metrics["panel_hash"].as_str().unwrap().len(), 64);
    for target in ["cum_confirmed", "unemployment"] {
        let m = &metrics["metrics"][target];
        for field in ["mae", "mape", "rmse", "r2"] {
            assert!(
                m[field].as_f64().is_some_and(f64::is_finite),
                "{target}.{field} = {}",
                m[field]
            );
        }
    }
    let predictions = fs::read_to_string(dir.path().join("f/predictions.csv")).unwrap();
    assert_eq!(predictions.lines().count(), 1 + 28);
    let trajectory = fs::read_to_string(dir.path().join("f/trajectory.csv")).unwrap();
    assert_eq!(trajectory.lines().count(), 1 + 28);
}

#[test]
fn policy_sweep_writes_255_rows_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    assert!(epiecon(&["synth", "--out-dir", "d"], dir.path()).status.success());
    let run = |out_dir: &str| {
        let out = epiecon(
            &[
                "policy",
                "--data-dir",
                "d",
                "--out-dir",
                out_dir,
                "--bundle",
                "d/truth_bundle.json",
                "--start",
                "2020-06-01",
                "--end",
                "2020-06-15",
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run("a");
    run("b");
    let csv = fs::read_to_string(dir.path().join("a/scenarios.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("mask,d_employment_pp,d_cases"));
    assert_eq!(lines.count(), 255);
    for name in ["scenarios.csv", "frontier.json", "marginal.json"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
    let frontier = read_json(&dir.path().join("a/frontier.json"));
    let points = frontier["points"].as_array().unwrap();
    assert!(!points.is_empty());
    for pair in points.windows(2) {
        assert!(pair[0]["d_cases"].as_f64() < pair[1]["d_cases"].as_f64());
        assert!(pair[0]["d_employment_pp"].as_f64() < pair[1]["d_employment_pp"].as_f64());
    }
    let marginal = read_json(&dir.path().join("a/marginal.json"));
    assert_eq!(marginal["stats"].as_array().unwrap().len(), 8);
    assert_eq!(marginal["ranking"].as_array().unwrap().len(), 8);
}

#[test]
fn train_then_blm_on_the_trained_bundle() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), TINY_CONFIG).unwrap();
    assert!(epiecon(&["synth", "--days", "84", "--out-dir", "d"], dir.path())
        .status
        .success());
    let out = epiecon(
        &[
            "train",
            "--config",
            "tiny.toml",
            "--seed",
            "3",
            "--data-dir",
            "d",
            "--out-dir",
            "t",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("t/train_report.json"));
    assert_eq!(report["seed"], 3);
    assert_eq!(report["validation_history"].as_array().unwrap().len(), 1);
    let out = epiecon(&["blm", "--data-dir", "d", "--out-dir", "t"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let blm = read_json(&dir.path().join("t/blm.json"));
    assert_eq!(blm["days"].as_array().unwrap().len(), 30);
    assert!(blm["equivalence"].is_object());
}

#[test]
fn calibrate_writes_finite_parameters() {
    let dir = tempfile::tempdir().unwrap();
    assert!(epiecon(&["synth", "--days", "60", "--out-dir", "d"], dir.path())
        .status
        .success());
    let out = epiecon(&["calibrate", "--data-dir", "d", "--out-dir", "c"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("c/calibration.json"));
    for key in ["beta", "alpha", "gamma"] {
        assert!(report["calibration"][key]
            .as_f64()
            .is_some_and(|v| v.is_finite() && v > 0.0));
    }
}

/// Raw source files covering `days` days from 2020-04-01.
fn write_raw_sources(dir: &Path, days: i64) {
    let start = NaiveDate::from_ymd_opt(2020, 4, 1).unwrap();
    let dates: Vec<NaiveDate> = (0..days).map(|k| start + Duration::days(k)).collect();

    let mut mobility = String::from("date");
    for c in [
        "retail_and_recreation",
        "grocery_and_pharmacy",
        "parks",
        "transit_stations",
        "workplaces",
        "residential",
    ] {
        write!(mobility, ",{c}_percent_change_from_baseline").unwrap();
    }
    mobility.push('\n');
    for (k, d) in dates.iter().enumerate() {
        let x = k as f64 * 0.2;
        writeln!(
            mobility,
            "{d},{},{},{},{},{},{}",
            -30.0 + x,
            -10.0,
            -5.0 + x,
            -35.0 + x,
            -40.0 + x,
            15.0 - x / 4.0
        )
        .unwrap();
    }
    fs::write(dir.join("mobility.csv"), mobility).unwrap();

    let codes = [
        ("C1", true),
        ("C2", true),
        ("C3", true),
        ("C4", true),
        ("C5", true),
        ("C6", true),
        ("C7", true),
        ("C8", false),
        ("E1", true),
        ("E2", false),
        ("H1", true),
        ("H2", false),
        ("H3", false),
        ("H6", true),
    ];
    let mut oxford = String::from("Date");
    for (code, flag) in codes {
        write!(oxford, ",{code}_Level").unwrap();
        if flag {
            write!(oxford, ",{code}_Flag").unwrap();
        }
    }
    oxford.push('\n');
    for (k, d) in dates.iter().enumerate() {
        write!(oxford, "{}", d.format("%Y%m%d")).unwrap();
        for (_, flag) in codes {
            write!(oxford, ",{}", if k < 40 { 2 } else { 1 }).unwrap();
            if flag {
                oxford.push_str(",1");
            }
        }
        oxford.push('\n');
    }
    fs::write(dir.join("oxford.csv"), oxford).unwrap();

    let mut claims = String::from("week_ending_date,insured_unemployment_rate\n");
    let mut week = start - Duration::days(7);
    let mut k = 0.0;
    while week <= *dates.last().unwrap() + Duration::days(7) {
        writeln!(claims, "{week},{}", 15.0 - k * 0.3).unwrap();
        week += Duration::days(7);
        k += 1.0;
    }
    fs::write(dir.join("claims.csv"), claims).unwrap();

    let mut epi = String::from("date,new_confirmed,new_recovered,new_dead\n");
    let mut state_epi = String::from("date,state,new_confirmed,new_recovered,new_dead\n");
    for (k, d) in dates.iter().enumerate() {
        let c = 1000.0 + 20.0 * k as f64;
        writeln!(epi, "{d},{c},{},{}", c * 0.6, c * 0.02).unwrap();
        for (state, share) in [("NY", 0.6), ("CA", 0.4)] {
            writeln!(
                state_epi,
                "{d},{state},{},{},{}",
                c * share,
                c * share * 0.6,
                c * share * 0.02
            )
            .unwrap();
        }
    }
    fs::write(dir.join("epi.csv"), epi).unwrap();
    fs::write(dir.join("epi_state.csv"), state_epi).unwrap();

    let mut protests = String::from("date,city,state,attendance\n");
    for d in &dates[55..60] {
        writeln!(protests, "{d},New York,NY,5000").unwrap();
        writeln!(protests, "{d},Los Angeles,CA,3000").unwrap();
    }
    fs::write(dir.join("protests.csv"), protests).unwrap();

    fs::write(
        dir.join("demographics.json"),
        r#"{"pop_density":35.0,"population":3.3e8,"gini":0.48,"share_65_plus":0.16,"gdp_per_capita":62000.0}"#,
    )
    .unwrap();
}

#[test]
fn ingest_builds_a_panel_from_raw_sources() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    fs::create_dir(&raw).unwrap();
    write_raw_sources(&raw, 70);
    let out = epiecon(&["ingest", "--data-dir", "raw", "--out-dir", "p"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("p/ingest_report.json"));
    assert_eq!(report["days"], 70);
    assert_eq!(report["sources"].as_array().unwrap().len(), 6);
    let panel = fs::read_to_string(dir.path().join("p/panel.csv")).unwrap();
    assert_eq!(panel.lines().count(), 71);

    let trimmed = epiecon(
        &[
            "ingest",
            "--data-dir",
            "raw",
            "--out-dir",
            "q",
            "--start",
            "2020-04-10",
            "--end",
            "2020-05-09",
        ],
        dir.path(),
    );
    assert!(trimmed.status.success());
    assert_eq!(read_json(&dir.path().join("q/ingest_report.json"))["days"], 30);

    // The ingested panel feeds the other subcommands directly.
    let out = epiecon(&["calibrate", "--data-dir", "p", "--out-dir", "p"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ingest_reports_a_missing_column() {
    let dir = tempfile::tempdir().unwrap();
    write_raw_sources(dir.path(), 70);
    fs::write(dir.path().join("claims.csv"), "week_ending_date,rate\n2020-04-01,3\n").unwrap();
    let out = epiecon(&["ingest", "--data-dir", "."], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["error"]["kind"], "missing_column");
}
