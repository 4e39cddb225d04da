use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{
    compute_metrics, iterate, joint_train, Bundle, Exogenous, JointConfig, MetricsReport, SimState, Trajectory,
};
use crate::data::{Demographics, Panel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RollingConfig {
    pub train_days: usize,
    pub test_days: usize,
    /// Days simulated per window; at most `test_days`.
    pub horizon: usize,
    /// Initialize each window's training from the previous window's bundle.
    pub warm_start: bool,
    pub joint: JointConfig,
}

impl Default for RollingConfig {
    fn default() -> Self {
        RollingConfig {
            train_days: 56,
            test_days: 14,
            horizon: 14,
            warm_start: true,
            joint: JointConfig::default(),
        }
    }
}

/// One out-of-sample day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastPoint {
    pub date: NaiveDate,
    pub cum_confirmed: f64,
    pub observed_cum_confirmed: f64,
    pub unemployment: f64,
    pub observed_unemployment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub train_start: NaiveDate,
    pub test_start: NaiveDate,
    pub validation_history: Vec<f64>,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingReport {
    pub windows: Vec<WindowResult>,
    pub predictions: Vec<ForecastPoint>,
    /// Keyed by target: `cum_confirmed` and `unemployment`.
    pub metrics: BTreeMap<String, MetricsReport>,
    /// Bundle trained on the last window.
    pub last_bundle: Bundle,
}

/// Starting rows of each `(train, test)` window pair. Test windows tile the
/// evaluation range without overlap.
pub fn window_starts(len: usize, train_days: usize, test_days: usize) -> Vec<usize> {
    if test_days == 0 {
        return Vec::new();
    }
    (0..)
        .map(|k| k * test_days)
        .take_while(|s| s + train_days + test_days <= len)
        .collect()
}

/// Slides a train/test window over the panel, retrains the coupled model on
/// each training span, simulates the following test span in closed loop from
/// the last observed week, and scores the concatenated out-of-sample
/// predictions.
pub fn rolling_forecast(panel: &Panel, demographics: &Demographics, config: &RollingConfig) -> Result<RollingReport> {
    if config.horizon == 0 || config.horizon > config.test_days {
        return Err(Error::Domain(format!(
            "horizon must lie in 1..={} days",
            config.test_days
        )));
    }
    let starts = window_starts(panel.len(), config.train_days, config.test_days);
    if starts.is_empty() {
        return Err(Error::Range(format!(
            "panel of {} days is shorter than {} training plus {} test days",
            panel.len(),
            config.train_days,
            config.test_days
        )));
    }
    let mut windows = Vec::with_capacity(starts.len());
    let mut predictions = Vec::new();
    let mut previous: Option<Bundle> = None;
    for (k, &start) in starts.iter().enumerate() {
        let test_start = start + config.train_days;
        let train = Panel {
            records: panel.records[start..test_start].to_vec(),
        };
        let joint = JointConfig {
            seed: config.joint.seed.wrapping_add(k as u64),
            ..config.joint.clone()
        };
        let init = if config.warm_start { previous.as_ref() } else { None };
        let outcome = joint_train(&train, demographics, &joint, init)?;
        let bundle = outcome.bundle.clone();
        let state = SimState::from_panel(&bundle, panel, test_start)?;
        let exo = Exogenous::from_panel(panel, test_start, config.horizon)?;
        let trajectory = iterate(&bundle, &state, config.horizon, &exo)?;
        for (p, o) in trajectory.records.iter().zip(&panel.records[test_start..]) {
            predictions.push(ForecastPoint {
                date: p.date,
                cum_confirmed: p.cum_confirmed,
                observed_cum_confirmed: o.cum_confirmed,
                unemployment: p.unemployment,
                observed_unemployment: o.unemployment,
            });
        }
        log::info!(
            "window {}: trained {}..{}, forecast from {}",
            k + 1,
            panel.records[start].date,
            panel.records[test_start - 1].date,
            panel.records[test_start].date
        );
        windows.push(WindowResult {
            train_start: panel.records[start].date,
            test_start: panel.records[test_start].date,
            validation_history: outcome.validation_history(),
            trajectory,
        });
        previous = Some(bundle);
    }
    let column = |f: fn(&ForecastPoint) -> f64| predictions.iter().map(f).collect::<Vec<f64>>();
    let mut metrics = BTreeMap::new();
    metrics.insert(
        "cum_confirmed".to_string(),
        compute_metrics(&column(|p| p.cum_confirmed), &column(|p| p.observed_cum_confirmed))?,
    );
    metrics.insert(
        "unemployment".to_string(),
        compute_metrics(&column(|p| p.unemployment), &column(|p| p.observed_unemployment))?,
    );
    Ok(RollingReport {
        windows,
        predictions,
        metrics,
        last_bundle: previous.expect("at least one window"),
    })
}
