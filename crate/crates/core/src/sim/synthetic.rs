//! A hand-built ground-truth bundle and the panel it generates, for
//! closed-loop self-consistency checks.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{iterate, Bundle, Exogenous, SimState};
use crate::data::{DailyRecord, Demographics, Panel, N_CONTAINMENT, N_MOBILITY, N_POLICY, RESIDENTIAL};
use crate::epi::{Compartments, IncubationDist, SeirParams, MAX_INCUBATION_DAYS};
use crate::error::{Error, Result};
use crate::forecast::{Architecture, InfectionModel, MobilityModel, UnemploymentModel, WINDOW};
use crate::nn::{softplus_inv, Lstm, Standardizer};

/// Shape of the generated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub start: NaiveDate,
    /// Panel length in days.
    pub days: usize,
    /// Days simulated before the panel starts, so its histories are endogenous.
    pub burn_in: usize,
    /// Infectious count at the start of the burn-in.
    pub initial_infectious: f64,
    /// Unemployment rate (percent) at the start of the burn-in.
    pub initial_unemployment: f64,
    /// When false, mobility ignores case counts.
    pub feedback: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            start: NaiveDate::from_ymd_opt(2020, 4, 1).expect("valid date"),
            days: 140,
            burn_in: 28,
            initial_infectious: 4000.0,
            initial_unemployment: 18.0,
            feedback: true,
        }
    }
}

pub fn synthetic_demographics() -> Demographics {
    Demographics {
        pop_density: 35.0,
        population: 1e7,
        gini: 0.45,
        share_65_plus: 0.16,
        gdp_per_capita: 60000.0,
    }
}

/// Mean and spread of each mobility category in the ground truth, percent.
const MOBILITY_MEAN: [f64; N_MOBILITY] = [-20.0, -10.0, -8.0, -25.0, -30.0, 10.0];
const MOBILITY_STD: [f64; N_MOBILITY] = [10.0, 8.0, 12.0, 10.0, 10.0, 4.0];
/// Effect of each fully applied containment policy, in category standard deviations.
const CONTAINMENT_EFFECT: f64 = 0.25;
const BLM_EFFECT: f64 = 0.5;
const CASE_EFFECT: f64 = 1.2;
/// Daily case count at which fear of infection starts to bite, and its scale.
const CASES_MEAN: f64 = 1000.0;
const CASES_STD: f64 = 600.0;
const UNEMPLOYMENT_EFFECT: f64 = 0.3;
/// Infection rate per susceptible-infectious contact at average mobility.
const BASE_RATE: f64 = 0.32;
/// Sensitivity of the infection rate to activity.
const RATE_EFFECT: f64 = 2.0;
/// Weight of each mobility category in the activity level.
const ACTIVITY_WEIGHT: f64 = 0.12;

/// LSTM whose last hidden state is `tanh(tanh(w . x_last))`: the input and
/// output gates are saturated open and the forget gate closed.
fn last_step_lstm(weights: &[f64]) -> Lstm {
    let mut l = Lstm::zeros(weights.len(), 1);
    l.w_ih[2 * weights.len()..3 * weights.len()].copy_from_slice(weights);
    l.bias = vec![30.0, -30.0, 0.0, 30.0];
    l
}

fn mobility_standardizer() -> Standardizer {
    Standardizer {
        mean: MOBILITY_MEAN.to_vec(),
        std: MOBILITY_STD.to_vec(),
    }
}

/// Mobility-to-activity weights shared by the unemployment and infection
/// ground truths: more time out and less at home means more activity.
fn activity_weights() -> Vec<f64> {
    (0..N_MOBILITY)
        .map(|k| {
            if k == RESIDENTIAL {
                -ACTIVITY_WEIGHT
            } else {
                ACTIVITY_WEIGHT
            }
        })
        .collect()
}

/// Ground-truth bundle with single-unit layers. Mobility falls as cases rise
/// and rises with unemployment, containment policies push activity down and
/// residential time up, and infection and employment both grow with activity.
pub fn ground_truth_bundle(feedback: bool) -> Bundle {
    let arch = Architecture {
        hidden: 1,
        demo_hidden: 1,
        inner_hidden: 1,
    };
    let demographics = synthetic_demographics();
    let demo_norm = Standardizer {
        mean: demographics.as_array().to_vec(),
        std: vec![1.0; 5],
    };

    let mut mobility = MobilityModel::zeros(&arch);
    mobility.cases_norm = Standardizer {
        mean: vec![CASES_MEAN],
        std: vec![CASES_STD],
    };
    mobility.unemployment_norm = Standardizer {
        mean: vec![10.0],
        std: vec![2.0],
    };
    mobility.demo_norm = demo_norm.clone();
    let case_effect = if feedback { CASE_EFFECT } else { 0.0 };
    for (k, c) in mobility.categories.iter_mut().enumerate() {
        let sign = if c.residential { -1.0 } else { 1.0 };
        c.cases_lstm = last_step_lstm(&[1.0]);
        c.unemployment_lstm = last_step_lstm(&[1.0]);
        c.head.weights = vec![-sign * case_effect, sign * UNEMPLOYMENT_EFFECT, 0.0];
        c.containment = vec![softplus_inv(CONTAINMENT_EFFECT); N_CONTAINMENT];
        if c.residential {
            c.blm = vec![softplus_inv(BLM_EFFECT)];
        }
        c.target_norm = Standardizer {
            mean: vec![MOBILITY_MEAN[k]],
            std: vec![MOBILITY_STD[k]],
        };
    }

    let mut unemployment = UnemploymentModel::zeros(&arch);
    unemployment.lstm = last_step_lstm(&activity_weights());
    unemployment.inner.weights = vec![1.0, 0.0];
    unemployment.head.weights = vec![-0.3, 0.9];
    unemployment.mobility_norm = mobility_standardizer();
    unemployment.demo_norm = demo_norm.clone();
    unemployment.rate_norm = Standardizer {
        mean: vec![9.0],
        std: vec![2.5],
    };

    let mut infection = InfectionModel::zeros(&arch);
    infection.lstm = last_step_lstm(&activity_weights());
    infection.head.weights = vec![RATE_EFFECT, 0.0];
    infection.head.bias = vec![softplus_inv(BASE_RATE)];
    infection.mobility_norm = mobility_standardizer();
    infection.demo_norm = demo_norm;

    Bundle {
        mobility,
        unemployment,
        infection,
        seir: SeirParams {
            beta: 0.25,
            alpha: 1.0 / 6.9,
            gamma: 0.1,
        },
        incubation: IncubationDist::default(),
        demographics,
    }
}

/// Policy indicators for `days` days. Containment policies start strict and
/// are relaxed one after another; the other indicators hold steady.
pub fn synthetic_policy_path(days: usize) -> Vec<[f64; N_POLICY]> {
    (0..days)
        .map(|t| {
            std::array::from_fn(|j| {
                if j < N_CONTAINMENT {
                    let begin = 50.0 + 8.0 * j as f64;
                    let progress = ((t as f64 - begin) / 40.0).clamp(0.0, 1.0);
                    0.8 - 0.5 * progress
                } else {
                    0.5
                }
            })
        })
        .collect()
}

/// Protest index: a two-week pulse starting at day `onset`.
pub fn synthetic_blm_path(days: usize, onset: usize) -> Vec<f64> {
    (0..days)
        .map(|t| {
            if t >= onset && t < onset + 14 {
                (std::f64::consts::PI * (t - onset) as f64 / 14.0).sin()
            } else {
                0.0
            }
        })
        .collect()
}

/// Initial burn-in state: constant histories and a pipeline of confirmations
/// from steady past infections.
fn initial_state(bundle: &Bundle, config: &SyntheticConfig) -> Result<SimState> {
    let pop = bundle.population();
    let daily_infections = bundle.seir.gamma * config.initial_infectious;
    let pmf = bundle.incubation.pmf();
    let pending: Vec<f64> = (0..MAX_INCUBATION_DAYS)
        .map(|k| daily_infections * pmf[k..].iter().sum::<f64>())
        .collect();
    let e = pending.iter().sum::<f64>() / pop;
    let i = config.initial_infectious / pop;
    let r = 0.5 * i;
    let first = config
        .start
        .checked_sub_days(chrono::Days::new(config.burn_in as u64 + 1))
        .ok_or_else(|| Error::Range("synthetic start date too early".into()))?;
    Ok(SimState {
        date: first,
        compartments: Compartments::new(1.0 - e - i - r, e, i, r),
        mobility: vec![MOBILITY_MEAN; WINDOW],
        unemployment: vec![config.initial_unemployment; WINDOW],
        cases: vec![daily_infections; WINDOW],
        pending,
    })
}

/// Runs `bundle` in closed loop and records the result as a panel.
///
/// Reported mobility is the simulated mobility, new confirmations are the
/// incubation-delayed reports, and removals are the daily change in the
/// removed compartment. Returns the panel and the full trajectory, burn-in
/// included.
pub fn generate_panel(bundle: &Bundle, config: &SyntheticConfig) -> Result<(Panel, super::Trajectory)> {
    if config.days == 0 {
        return Err(Error::Range("synthetic panel needs at least one day".into()));
    }
    let total = config.burn_in + config.days;
    let init = initial_state(bundle, config)?;
    let exo = Exogenous {
        policy: synthetic_policy_path(total),
        blm: synthetic_blm_path(total, config.burn_in + 60),
        unemployment_shift: 0.0,
    };
    let traj = iterate(bundle, &init, total, &exo)?;
    let pop = bundle.population();
    let mut cum_confirmed = init.cum_confirmed(pop);
    let mut cum_removed = init.compartments.r * pop;
    let mut records = Vec::with_capacity(config.days);
    for (t, rec) in traj.records.iter().enumerate() {
        let removed = rec.compartments.r * pop;
        let new_recovered = removed - cum_removed;
        cum_removed = removed;
        cum_confirmed += rec.new_confirmed;
        if t < config.burn_in {
            continue;
        }
        records.push(DailyRecord {
            date: rec.date,
            mobility_raw: rec.mobility,
            mobility: rec.mobility,
            unemployment: rec.unemployment,
            new_confirmed: rec.new_confirmed,
            new_recovered,
            new_dead: 0.0,
            policy: exo.policy[t],
            blm: exo.blm[t],
            cum_confirmed,
            cum_removed,
        });
    }
    Ok((Panel::new(records)?, traj))
}
