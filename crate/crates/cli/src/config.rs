use std::path::Path;

use anyhow::Context;
use chrono::NaiveDate;
use epiecon_core::epi::CalibrationConfig;
use epiecon_core::policy::DEFAULT_HORIZON;
use epiecon_core::sim::{JointConfig, RollingConfig};
use serde::{Deserialize, Serialize};

use crate::args::Common;

/// Every tunable of a run. Missing keys fall back to the library defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub calibration: CalibrationConfig,
    pub train: JointConfig,
    pub forecast: ForecastSection,
    pub policy: PolicySection,
    pub blm: BlmSection,
    pub serve: ServeSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            calibration: CalibrationConfig::default(),
            train: JointConfig::default(),
            forecast: ForecastSection::default(),
            policy: PolicySection::default(),
            blm: BlmSection::default(),
            serve: ServeSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    pub train_days: usize,
    pub test_days: usize,
    pub horizon: usize,
    pub warm_start: bool,
}

impl Default for ForecastSection {
    fn default() -> Self {
        let r = RollingConfig::default();
        ForecastSection {
            train_days: r.train_days,
            test_days: r.test_days,
            horizon: r.horizon,
            warm_start: r.warm_start,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    /// First scenario start date; defaults to 15 days before the panel end.
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub horizon: usize,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            start: None,
            end: None,
            horizon: DEFAULT_HORIZON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlmSection {
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub lag_days: usize,
    pub report_days: usize,
}

impl Default for BlmSection {
    fn default() -> Self {
        BlmSection {
            start: None,
            end: None,
            lag_days: 14,
            report_days: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub bind: String,
    /// Simulations allowed to run at once.
    pub workers: usize,
}

impl Default for ServeSection {
    fn default() -> Self {
        ServeSection {
            bind: "127.0.0.1:8080".into(),
            workers: 4,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Config file (if any) with command-line overrides applied.
    pub fn resolve(common: &Common) -> anyhow::Result<Self> {
        let mut config = match &common.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = common.seed {
            config.seed = seed;
        }
        config.train.seed = config.seed;
        if let Some(h) = common.horizon {
            config.policy.horizon = h;
            config.forecast.horizon = h;
        }
        if let Some(bind) = &common.bind {
            config.serve.bind = bind.clone();
        }
        Ok(config)
    }

    pub fn rolling(&self) -> RollingConfig {
        RollingConfig {
            train_days: self.forecast.train_days,
            test_days: self.forecast.test_days,
            horizon: self.forecast.horizon,
            warm_start: self.forecast.warm_start,
            joint: self.train.clone(),
        }
    }
}
