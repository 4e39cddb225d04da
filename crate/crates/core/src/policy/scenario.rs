use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Panel, N_CONTAINMENT};
use crate::error::{Error, Result};
use crate::sim::{iterate, Bundle, Exogenous, SimState, Trajectory};

/// Reopening levers in mask-bit order: school closing, workplace closing,
/// public events, gatherings, public transport, stay-at-home, internal
/// movement, international travel.
pub const LEVER_NAMES: [&str; N_CONTAINMENT] = [
    "school closing",
    "workplace closing",
    "public events",
    "gatherings",
    "public transport",
    "stay at home",
    "internal movement",
    "international travel",
];

/// Default outcome horizon: two incubation periods.
pub const DEFAULT_HORIZON: usize = 14;

/// Set of reopened containment policies; bit `j` opens lever `C{j+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OpenMask(pub u8);

impl OpenMask {
    pub const NONE: OpenMask = OpenMask(0);
    pub const ALL: OpenMask = OpenMask(u8::MAX);

    pub fn from_bools(open: [bool; N_CONTAINMENT]) -> Self {
        OpenMask(open.iter().enumerate().fold(0, |m, (j, &o)| m | (u8::from(o) << j)))
    }

    pub fn to_bools(self) -> [bool; N_CONTAINMENT] {
        std::array::from_fn(|j| self.is_open(j))
    }

    pub fn is_open(self, lever: usize) -> bool {
        self.0 >> lever & 1 == 1
    }

    pub fn with(self, lever: usize) -> Self {
        OpenMask(self.0 | 1 << lever)
    }

    pub fn without(self, lever: usize) -> Self {
        OpenMask(self.0 & !(1 << lever))
    }

    pub fn count(self) -> u32 {
        self.0.count_ones()
    }
}

impl fmt::Display for OpenMask {
    /// `C1+C3` style; the empty mask is `none`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            return f.write_str("none");
        }
        let parts: Vec<String> = (0..N_CONTAINMENT)
            .filter(|&j| self.is_open(j))
            .map(|j| format!("C{}", j + 1))
            .collect();
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for OpenMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "none" {
            return Ok(OpenMask::NONE);
        }
        let mut mask = OpenMask::NONE;
        for part in s.split('+') {
            let lever = part
                .trim()
                .strip_prefix('C')
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|n| (1..=N_CONTAINMENT).contains(n))
                .ok_or_else(|| Error::Domain(format!("invalid policy mask `{s}`")))?;
            mask = mask.with(lever - 1);
        }
        Ok(mask)
    }
}

/// All nonempty masks in binary counting order: `{C1}` first, all eight last.
pub fn enumerate_scenarios() -> Vec<OpenMask> {
    (1..=u8::MAX).map(OpenMask).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyScenario {
    pub open_mask: OpenMask,
    pub start_date: NaiveDate,
    pub horizon: usize,
}

/// Effect of a scenario relative to keeping the observed policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    /// Increase in the employment rate, percentage points.
    pub d_employment: f64,
    /// Increase in cumulative confirmed cases.
    pub d_cases: f64,
}

impl ScenarioOutcome {
    pub const ZERO: ScenarioOutcome = ScenarioOutcome {
        d_employment: 0.0,
        d_cases: 0.0,
    };
}

/// Seed state and observed exogenous paths for one start date.
struct Baseline {
    state: SimState,
    exo: Exogenous,
    trajectory: Trajectory,
}

fn baseline(bundle: &Bundle, panel: &Panel, start: NaiveDate, horizon: usize) -> Result<Baseline> {
    let index = panel
        .index_of(start)
        .ok_or_else(|| Error::Range(format!("{start} is outside {}..={}", panel.start(), panel.end())))?;
    let state = SimState::from_panel(bundle, panel, index)?;
    let exo = Exogenous::from_panel(panel, index, horizon)?;
    let trajectory = iterate(bundle, &state, horizon, &exo)?;
    Ok(Baseline { state, exo, trajectory })
}

fn open_policies(exo: &Exogenous, mask: OpenMask) -> Exogenous {
    let mut out = exo.clone();
    for day in &mut out.policy {
        for (j, p) in day.iter_mut().take(N_CONTAINMENT).enumerate() {
            if mask.is_open(j) {
                *p = 0.0;
            }
        }
    }
    out
}

fn outcome_at_horizon(base: &Trajectory, scenario: &Trajectory) -> ScenarioOutcome {
    match (base.records.last(), scenario.records.last()) {
        (Some(b), Some(s)) => ScenarioOutcome {
            d_employment: b.unemployment - s.unemployment,
            d_cases: s.cum_confirmed - b.cum_confirmed,
        },
        _ => ScenarioOutcome::ZERO,
    }
}

fn check_inputs(start_dates: &[NaiveDate], horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::Domain("scenario horizon must be at least 1 day".into()));
    }
    if start_dates.is_empty() {
        return Err(Error::Range("no scenario start dates".into()));
    }
    Ok(())
}

/// Opens the masked policies (their containment indicators drop to 0 from
/// the start date on) and compares the closed loop against the observed
/// policy path after `horizon` days, averaged over `start_dates`.
pub fn simulate_scenario(
    bundle: &Bundle,
    panel: &Panel,
    mask: OpenMask,
    start_dates: &[NaiveDate],
    horizon: usize,
) -> Result<ScenarioOutcome> {
    check_inputs(start_dates, horizon)?;
    let mut sum = ScenarioOutcome::ZERO;
    for &start in start_dates {
        let base = baseline(bundle, panel, start, horizon)?;
        let scenario = iterate(bundle, &base.state, horizon, &open_policies(&base.exo, mask))?;
        let o = outcome_at_horizon(&base.trajectory, &scenario);
        sum.d_employment += o.d_employment;
        sum.d_cases += o.d_cases;
    }
    let n = start_dates.len() as f64;
    Ok(ScenarioOutcome {
        d_employment: sum.d_employment / n,
        d_cases: sum.d_cases / n,
    })
}

/// Baseline and scenario trajectories for a single start date.
pub fn scenario_trajectories(
    bundle: &Bundle,
    panel: &Panel,
    scenario: &PolicyScenario,
    blm_scale: f64,
) -> Result<(Trajectory, Trajectory)> {
    check_inputs(&[scenario.start_date], scenario.horizon)?;
    if !(blm_scale >= 0.0 && blm_scale.is_finite()) {
        return Err(Error::Domain(format!(
            "blm_scale must be finite and nonnegative, got {blm_scale}"
        )));
    }
    let base = baseline(bundle, panel, scenario.start_date, scenario.horizon)?;
    let mut exo = open_policies(&base.exo, scenario.open_mask);
    for b in &mut exo.blm {
        *b = (*b * blm_scale).min(1.0);
    }
    let scenario = iterate(bundle, &base.state, scenario.horizon, &exo)?;
    Ok((base.trajectory, scenario))
}

/// Every nonempty mask's outcome, in enumeration order. Baselines are shared
/// across masks and the scenarios run in parallel.
pub fn sweep_scenarios(
    bundle: &Bundle,
    panel: &Panel,
    start_dates: &[NaiveDate],
    horizon: usize,
) -> Result<Vec<(OpenMask, ScenarioOutcome)>> {
    check_inputs(start_dates, horizon)?;
    let baselines = start_dates
        .iter()
        .map(|&d| baseline(bundle, panel, d, horizon))
        .collect::<Result<Vec<_>>>()?;
    let n = baselines.len() as f64;
    enumerate_scenarios()
        .into_par_iter()
        .map(|mask| {
            let mut sum = ScenarioOutcome::ZERO;
            for base in &baselines {
                let scenario = iterate(bundle, &base.state, horizon, &open_policies(&base.exo, mask))?;
                let o = outcome_at_horizon(&base.trajectory, &scenario);
                sum.d_employment += o.d_employment;
                sum.d_cases += o.d_cases;
            }
            Ok((
                mask,
                ScenarioOutcome {
                    d_employment: sum.d_employment / n,
                    d_cases: sum.d_cases / n,
                },
            ))
        })
        .collect()
}

/// Dates `start..=end`.
pub fn date_range(start: NaiveDate, end: NaiveDate) -> Result<Vec<NaiveDate>> {
    if end < start {
        return Err(Error::Range(format!("{start}..={end}")));
    }
    Ok(start.iter_days().take_while(|d| *d <= end).collect())
}
