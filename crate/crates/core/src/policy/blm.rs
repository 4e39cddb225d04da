use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::Panel;
use crate::error::{Error, Result};
use crate::sim::{iterate, Bundle, Exogenous, SimState, Trajectory};

/// Protest window and reporting span for the counterfactual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlmConfig {
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    /// Days after the window end before reporting starts.
    pub lag_days: usize,
    pub report_days: usize,
}

impl BlmConfig {
    pub fn new(window_start: NaiveDate, window_end: NaiveDate) -> Self {
        BlmConfig {
            window_start,
            window_end,
            lag_days: 14,
            report_days: 30,
        }
    }

    fn horizon(&self) -> Result<usize> {
        if self.window_end < self.window_start {
            return Err(Error::Range(format!("{}..={}", self.window_start, self.window_end)));
        }
        if self.report_days == 0 {
            return Err(Error::Domain("report_days must be at least 1".into()));
        }
        let window = (self.window_end - self.window_start).num_days() as usize + 1;
        Ok(window + self.lag_days + self.report_days)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlmDay {
    pub date: NaiveDate,
    /// Extra cumulative cases attributable to the protest index.
    pub d_cases: f64,
    /// Extra employment, percentage points.
    pub d_employment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlmReport {
    pub config: BlmConfig,
    pub days: Vec<BlmDay>,
}

impl BlmReport {
    pub fn last(&self) -> Option<&BlmDay> {
        self.days.last()
    }
}

fn seeded(bundle: &Bundle, panel: &Panel, start: NaiveDate, horizon: usize) -> Result<(SimState, Exogenous)> {
    let index = panel
        .index_of(start)
        .ok_or_else(|| Error::Range(format!("{start} is outside {}..={}", panel.start(), panel.end())))?;
    Ok((
        SimState::from_panel(bundle, panel, index)?,
        Exogenous::from_panel(panel, index, horizon)?,
    ))
}

/// Simulates from the start of the protest window with the observed protest
/// index and with the index held at zero, and reports the differences over
/// the reporting span.
pub fn blm_counterfactual(bundle: &Bundle, panel: &Panel, config: &BlmConfig) -> Result<BlmReport> {
    let horizon = config.horizon()?;
    let (state, observed) = seeded(bundle, panel, config.window_start, horizon)?;
    let mut zeroed = observed.clone();
    zeroed.blm.iter_mut().for_each(|b| *b = 0.0);
    let with = iterate(bundle, &state, horizon, &observed)?;
    let without = iterate(bundle, &state, horizon, &zeroed)?;
    let skip = horizon - config.report_days;
    let days = with
        .records
        .iter()
        .zip(&without.records)
        .skip(skip)
        .map(|(a, b)| BlmDay {
            date: a.date,
            d_cases: a.cum_confirmed - b.cum_confirmed,
            d_employment: b.unemployment - a.unemployment,
        })
        .collect();
    Ok(BlmReport {
        config: config.clone(),
        days,
    })
}

/// Scenario in which an employment shift is converted into cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceSetup {
    pub start: NaiveDate,
    pub horizon: usize,
    /// Run against a protest-free exogenous path.
    pub zero_blm: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equivalence {
    /// Employment increase, percentage points.
    pub delta: f64,
    /// Case effect of `delta` from a forward run.
    pub d_cases: f64,
}

pub const EQUIVALENCE_MAX_SHIFT: f64 = 5.0;
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-6;

/// Extra cumulative cases at the horizon when the unemployment seen by the
/// mobility model is lowered by `delta` points.
pub fn employment_shift_cases(bundle: &Bundle, panel: &Panel, setup: &EquivalenceSetup, delta: f64) -> Result<f64> {
    if setup.horizon == 0 {
        return Err(Error::Domain("equivalence horizon must be at least 1 day".into()));
    }
    let (state, mut exo) = seeded(bundle, panel, setup.start, setup.horizon)?;
    if setup.zero_blm {
        exo.blm.iter_mut().for_each(|b| *b = 0.0);
    }
    let run = |exo: &Exogenous| -> Result<Trajectory> { iterate(bundle, &state, setup.horizon, exo) };
    let base = run(&exo)?;
    exo.unemployment_shift = delta;
    let shifted = run(&exo)?;
    let end = |t: &Trajectory| t.records.last().map_or(0.0, |r| r.cum_confirmed);
    Ok(end(&shifted) - end(&base))
}

/// Employment shift in `[0, 5]` points whose case effect equals
/// `target_d_cases`, by bisection.
pub fn employment_value_equivalence(
    bundle: &Bundle,
    panel: &Panel,
    setup: &EquivalenceSetup,
    target_d_cases: f64,
) -> Result<Equivalence> {
    if !target_d_cases.is_finite() {
        return Err(Error::Domain(format!("target must be finite, got {target_d_cases}")));
    }
    let f = |delta: f64| employment_shift_cases(bundle, panel, setup, delta).map(|c| c - target_d_cases);
    let lo_value = f(0.0)?;
    if target_d_cases == 0.0 {
        return Ok(Equivalence {
            delta: 0.0,
            d_cases: lo_value,
        });
    }
    let hi_value = f(EQUIVALENCE_MAX_SHIFT)?;
    if hi_value == 0.0 {
        return Ok(Equivalence {
            delta: EQUIVALENCE_MAX_SHIFT,
            d_cases: target_d_cases,
        });
    }
    if lo_value.signum() == hi_value.signum() {
        return Err(Error::Bracket(format!(
            "a case effect of {target_d_cases} is outside what a 0 to {EQUIVALENCE_MAX_SHIFT} point shift produces ({} to {})",
            lo_value + target_d_cases,
            hi_value + target_d_cases
        )));
    }
    let (mut lo, mut hi) = (0.0, EQUIVALENCE_MAX_SHIFT);
    let lo_sign = lo_value.signum();
    while hi - lo > EQUIVALENCE_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        let v = f(mid)?;
        if v == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if v.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let delta = 0.5 * (lo + hi);
    Ok(Equivalence {
        delta,
        d_cases: f(delta)? + target_d_cases,
    })
}
