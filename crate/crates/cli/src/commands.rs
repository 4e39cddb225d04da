use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{Duration, NaiveDate};
use epiecon_core::data::{build_panel, ingest_sources, load_demographics, Demographics, Panel, SourcePaths};
use epiecon_core::epi::calibrate;
use epiecon_core::nn::{load_checkpoint, save_checkpoint};
use epiecon_core::policy::{
    blm_counterfactual, date_range, employment_value_equivalence, frontier_points, marginal_policy_stats,
    rank_by_ratio, sweep_scenarios, write_scenarios_csv, BlmConfig, EquivalenceSetup,
};
use epiecon_core::sim::synthetic::{generate_panel, ground_truth_bundle, synthetic_demographics, SyntheticConfig};
use epiecon_core::sim::{joint_train, rolling_forecast, Bundle, Trajectory};
use epiecon_core::Error;
use serde::Serialize;
use serde_json::json;

use crate::args::{Cli, Command, Common};
use crate::config::RunConfig;
use crate::SCHEMA_VERSION;

/// Checkpoint kind of saved bundles.
pub const BUNDLE_KIND: &str = "bundle";
pub const PANEL_FILE: &str = "panel.csv";
pub const DEMOGRAPHICS_FILE: &str = "demographics.json";
pub const BUNDLE_FILE: &str = "bundle.json";
/// Default scenario start-date window: the last this many days of the panel.
const DEFAULT_POLICY_DAYS: i64 = 15;

pub fn dispatch(cli: &Cli) -> Result<()> {
    let config = RunConfig::resolve(&cli.common)?;
    let c = &cli.common;
    match &cli.command {
        Command::Synth { days } => synth(c, *days),
        Command::Ingest => ingest(c),
        Command::Calibrate => calibrate_cmd(c, &config),
        Command::Train => train(c, &config),
        Command::Forecast => forecast(c, &config),
        Command::Policy => policy(c, &config),
        Command::Blm => blm(c, &config),
        Command::Serve => crate::serve::serve_blocking(c, &config),
    }
}

fn out_path(common: &Common, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&common.out_dir).with_context(|| format!("creating {}", common.out_dir.display()))?;
    Ok(common.out_dir.join(name))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(BufWriter<fs::File>) -> Result<()>,
{
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f(BufWriter::new(file))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Panel and demographics from the data directory.
pub fn load_inputs(common: &Common) -> Result<(Panel, Demographics)> {
    let panel = Panel::load(&common.data_dir.join(PANEL_FILE))?;
    let demographics = load_demographics(&common.data_dir.join(DEMOGRAPHICS_FILE))?;
    Ok((panel, demographics))
}

pub fn bundle_path(common: &Common) -> PathBuf {
    common
        .bundle
        .clone()
        .unwrap_or_else(|| common.out_dir.join(BUNDLE_FILE))
}

pub fn load_bundle(common: &Common) -> Result<Bundle> {
    let path = bundle_path(common);
    load_checkpoint(&path, BUNDLE_KIND).with_context(|| format!("loading bundle {}", path.display()))
}

/// The panel restricted to `--start`/`--end` when given.
fn restrict(panel: &Panel, common: &Common) -> Result<Panel> {
    if common.start.is_none() && common.end.is_none() {
        return Ok(panel.clone());
    }
    let start = common.start.unwrap_or(panel.start());
    let end = common.end.unwrap_or(panel.end());
    Ok(panel.between(start, end)?)
}

fn synth(common: &Common, days: usize) -> Result<()> {
    let bundle = ground_truth_bundle(true);
    let mut config = SyntheticConfig {
        days,
        ..SyntheticConfig::default()
    };
    if let Some(start) = common.start {
        config.start = start;
    }
    let (panel, _) = generate_panel(&bundle, &config)?;
    let demographics = synthetic_demographics();
    let panel_path = out_path(common, PANEL_FILE)?;
    panel.save(&panel_path)?;
    println!("wrote {}", panel_path.display());
    write_json(&out_path(common, DEMOGRAPHICS_FILE)?, &demographics)?;
    let truth = out_path(common, "truth_bundle.json")?;
    save_checkpoint(&truth, BUNDLE_KIND, &bundle)?;
    println!("wrote {}", truth.display());
    write_json(
        &out_path(common, "synth_report.json")?,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "panel_hash": panel.content_hash()?,
            "start": panel.start(),
            "end": panel.end(),
            "days": panel.len(),
            "config": config,
        }),
    )
}

fn ingest(common: &Common) -> Result<()> {
    let (raw, demographics) = ingest_sources(&SourcePaths::in_dir(&common.data_dir))?;
    let (panel, demographics) = build_panel(&raw, &demographics)?;
    let panel = restrict(&panel, common)?;
    let panel_path = out_path(common, PANEL_FILE)?;
    panel.save(&panel_path)?;
    println!("wrote {}", panel_path.display());
    write_json(&out_path(common, DEMOGRAPHICS_FILE)?, &demographics)?;
    write_json(
        &out_path(common, "ingest_report.json")?,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "panel_hash": panel.content_hash()?,
            "start": panel.start(),
            "end": panel.end(),
            "days": panel.len(),
            "sources": raw.reports,
        }),
    )
}

fn calibrate_cmd(common: &Common, config: &RunConfig) -> Result<()> {
    let (panel, demographics) = load_inputs(common)?;
    let panel = restrict(&panel, common)?;
    let pop = demographics.population;
    let confirmed = panel.column(|r| r.cum_confirmed / pop);
    let removed = panel.column(|r| r.cum_removed / pop);
    let report = calibrate(&confirmed, &removed, &config.calibration)?;
    write_json(
        &out_path(common, "calibration.json")?,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "panel_hash": panel.content_hash()?,
            "start": panel.start(),
            "end": panel.end(),
            "calibration": report,
        }),
    )
}

fn train(common: &Common, config: &RunConfig) -> Result<()> {
    let (panel, demographics) = load_inputs(common)?;
    let panel = restrict(&panel, common)?;
    let outcome = joint_train(&panel, &demographics, &config.train, None)?;
    let path = bundle_path(common);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    save_checkpoint(&path, BUNDLE_KIND, &outcome.bundle)?;
    println!("wrote {}", path.display());
    write_json(
        &out_path(common, "train_report.json")?,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "panel_hash": panel.content_hash()?,
            "start": panel.start(),
            "end": panel.end(),
            "seed": config.train.seed,
            "best_sweep": outcome.best_sweep,
            "validation_history": outcome.validation_history(),
            "calibration": outcome.calibration,
            "sweeps": outcome.sweeps,
        }),
    )
}

fn forecast(common: &Common, config: &RunConfig) -> Result<()> {
    let (panel, demographics) = load_inputs(common)?;
    let panel = restrict(&panel, common)?;
    let report = rolling_forecast(&panel, &demographics, &config.rolling())?;
    let windows: Vec<_> = report
        .windows
        .iter()
        .map(|w| {
            json!({
                "train_start": w.train_start,
                "test_start": w.test_start,
                "validation_history": w.validation_history,
            })
        })
        .collect();
    write_json(
        &out_path(common, "metrics.json")?,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "panel_hash": panel.content_hash()?,
            "seed": config.train.seed,
            "metrics": report.metrics,
            "windows": windows,
        }),
    )?;
    write_with(&out_path(common, "predictions.csv")?, |out| {
        let mut w = csv::Writer::from_writer(out);
        for p in &report.predictions {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    })?;
    // Test windows tile the evaluation range, so their trajectories concatenate.
    let Some(last) = report.windows.last() else {
        bail!(Error::Range("panel too short for a single forecast window".into()));
    };
    let combined = Trajectory {
        records: report
            .windows
            .iter()
            .flat_map(|w| w.trajectory.records.clone())
            .collect(),
        final_state: last.trajectory.final_state.clone(),
    };
    write_with(&out_path(common, "trajectory.csv")?, |out| Ok(combined.write_csv(out)?))
}

/// Scenario start dates from flags, then config, then the last days of the panel.
pub fn policy_window(panel: &Panel, common: &Common, config: &RunConfig) -> (NaiveDate, NaiveDate) {
    let end = common.end.or(config.policy.end).unwrap_or(panel.end());
    let start = common
        .start
        .or(config.policy.start)
        .unwrap_or_else(|| (end - Duration::days(DEFAULT_POLICY_DAYS - 1)).max(panel.start()));
    (start, end)
}

fn policy(common: &Common, config: &RunConfig) -> Result<()> {
    let (panel, _) = load_inputs(common)?;
    let bundle = load_bundle(common)?;
    let (start, end) = policy_window(&panel, common, config);
    let horizon = config.policy.horizon;
    let dates = date_range(start, end)?;
    let rows = sweep_scenarios(&bundle, &panel, &dates, horizon)?;
    let hash = panel.content_hash()?;
    write_with(&out_path(common, "scenarios.csv")?, |out| {
        Ok(write_scenarios_csv(&rows, out)?)
    })?;
    write_json(
        &out_path(common, "frontier.json")?,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "panel_hash": hash,
            "start": start,
            "end": end,
            "horizon": horizon,
            "points": frontier_points(&rows),
        }),
    )?;
    let stats = marginal_policy_stats(&rows)?;
    let ranking: Vec<&str> = rank_by_ratio(&stats).iter().map(|s| s.name.as_str()).collect();
    write_json(
        &out_path(common, "marginal.json")?,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "panel_hash": hash,
            "start": start,
            "end": end,
            "horizon": horizon,
            "stats": stats,
            "ranking": ranking,
        }),
    )
}

/// The first contiguous run of days with protest activity.
fn protest_window(panel: &Panel) -> Result<(NaiveDate, NaiveDate)> {
    let active = |k: &usize| panel.records[*k].blm > 0.0;
    let Some(first) = (0..panel.len()).find(active) else {
        bail!(Error::Range(
            "panel has no protest activity; pass --start and --end".into()
        ));
    };
    let last = (first..panel.len()).take_while(active).last().unwrap_or(first);
    Ok((panel.records[first].date, panel.records[last].date))
}

fn blm(common: &Common, config: &RunConfig) -> Result<()> {
    let (panel, _) = load_inputs(common)?;
    let bundle = load_bundle(common)?;
    let (start, end) = match (common.start.or(config.blm.start), common.end.or(config.blm.end)) {
        (Some(s), Some(e)) => (s, e),
        (None, None) => protest_window(&panel)?,
        _ => bail!(Error::Range("give both ends of the protest window".into())),
    };
    let blm_config = BlmConfig {
        lag_days: config.blm.lag_days,
        report_days: config.blm.report_days,
        ..BlmConfig::new(start, end)
    };
    let report = blm_counterfactual(&bundle, &panel, &blm_config)?;
    let window_days = (end - start).num_days() as usize + 1;
    let equivalence = match report.last() {
        Some(last) => {
            let setup = EquivalenceSetup {
                start,
                horizon: window_days + blm_config.lag_days + blm_config.report_days,
                zero_blm: true,
            };
            match employment_value_equivalence(&bundle, &panel, &setup, last.d_cases) {
                Ok(eq) => json!({ "delta_pp": eq.delta, "d_cases": eq.d_cases, "target_d_cases": last.d_cases }),
                Err(e @ Error::Bracket(_)) => json!({ "error": e.to_string(), "target_d_cases": last.d_cases }),
                Err(e) => return Err(e.into()),
            }
        }
        None => serde_json::Value::Null,
    };
    write_json(
        &out_path(common, "blm.json")?,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "panel_hash": panel.content_hash()?,
            "config": report.config,
            "days": report.days,
            "equivalence": equivalence,
        }),
    )
}
