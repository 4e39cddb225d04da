use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::{Demographics, Panel, N_DEMOGRAPHICS, N_MOBILITY, N_POLICY};
use crate::epi::{Compartments, IncubationDist, SeirParams, MAX_INCUBATION_DAYS};
use crate::error::{Error, Result};
use crate::forecast::{InfectionModel, MobilityModel, UnemploymentModel, WINDOW};

/// Everything the closed loop needs: the three forecasters, the epidemic
/// parameters and the population they apply to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub mobility: MobilityModel,
    pub unemployment: UnemploymentModel,
    pub infection: InfectionModel,
    pub seir: SeirParams,
    pub incubation: IncubationDist,
    pub demographics: Demographics,
}

impl Bundle {
    pub fn population(&self) -> f64 {
        self.demographics.population
    }

    pub fn demographics_array(&self) -> [f64; N_DEMOGRAPHICS] {
        self.demographics.as_array()
    }
}

/// Closed-loop state at the end of `date`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub date: NaiveDate,
    pub compartments: Compartments,
    /// Smoothed mobility per day, oldest first.
    pub mobility: Vec<[f64; N_MOBILITY]>,
    /// Unemployment rate (percent) per day, oldest first.
    pub unemployment: Vec<f64>,
    /// Daily new confirmed cases, oldest first.
    pub cases: Vec<f64>,
    /// Confirmations already scheduled: `pending[k]` is due `k + 1` days
    /// after `date`.
    pub pending: Vec<f64>,
}

impl SimState {
    pub fn validate(&self) -> Result<()> {
        for len in [self.mobility.len(), self.unemployment.len(), self.cases.len()] {
            if len < WINDOW {
                return Err(Error::Window {
                    needed: WINDOW,
                    got: len,
                });
            }
        }
        if self.pending.len() != MAX_INCUBATION_DAYS {
            return Err(Error::Shape {
                context: "pending confirmations",
                expected: MAX_INCUBATION_DAYS,
                actual: self.pending.len(),
            });
        }
        if self.pending.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(
                "pending confirmations must be finite and nonnegative".into(),
            ));
        }
        self.compartments.validate()
    }

    /// Cumulative confirmed count `(I + R) * population`.
    pub fn cum_confirmed(&self, population: f64) -> f64 {
        self.compartments.confirmed() * population
    }

    /// State at the end of the day before panel row `index`, so that the
    /// simulation continues with that row's date.
    ///
    /// Infectious and removed fractions come from the observed active and
    /// removed counts. Confirmations still in the pipeline are rebuilt from
    /// infections over the preceding incubation range, estimated with the
    /// bundle's infection model on observed mobility; they also make up the
    /// exposed compartment.
    pub fn from_panel(bundle: &Bundle, panel: &Panel, index: usize) -> Result<SimState> {
        if index < WINDOW || index > panel.len() {
            return Err(Error::Range(format!(
                "seeding at row {index} needs {WINDOW} prior days within a panel of {} days",
                panel.len()
            )));
        }
        let pop = bundle.population();
        if !(pop > 0.0) {
            return Err(Error::Domain(format!("population must be positive, got {pop}")));
        }
        let recs = &panel.records;
        let last = &recs[index - 1];
        let demo = bundle.demographics_array();
        let pmf = bundle.incubation.pmf();
        let mut pending = vec![0.0; MAX_INCUBATION_DAYS];
        let first = index.saturating_sub(MAX_INCUBATION_DAYS).max(WINDOW - 1);
        for j in first..index {
            let window: Vec<[f64; N_MOBILITY]> = recs[j + 1 - WINDOW..=j].iter().map(|r| r.mobility).collect();
            let rate = bundle.infection.predict(&window, &demo)?;
            let susceptible = (1.0 - recs[j].cum_confirmed / pop).max(0.0);
            let infections = rate * susceptible * recs[j].active();
            for (k, p) in pmf.iter().enumerate() {
                let due = j + k + 1;
                if due >= index {
                    pending[due - index] += infections * p;
                }
            }
        }
        let e = pending.iter().sum::<f64>() / pop;
        let i = last.active() / pop;
        let r = last.cum_removed / pop;
        let s = 1.0 - e - i - r;
        if s < 0.0 {
            return Err(Error::Domain(format!(
                "seed state on {} has no susceptible population left",
                last.date
            )));
        }
        let history = &recs[index - WINDOW..index];
        let state = SimState {
            date: last.date,
            compartments: Compartments::new(s, e, i, r),
            mobility: history.iter().map(|r| r.mobility).collect(),
            unemployment: history.iter().map(|r| r.unemployment).collect(),
            cases: history.iter().map(|r| r.new_confirmed).collect(),
            pending,
        };
        state.validate()?;
        Ok(state)
    }
}

/// Inputs the closed loop does not predict, one entry per simulated day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exogenous {
    pub policy: Vec<[f64; N_POLICY]>,
    pub blm: Vec<f64>,
    /// Percentage points subtracted from every unemployment value the
    /// mobility model sees (an employment-rate increase).
    pub unemployment_shift: f64,
}

impl Exogenous {
    /// Observed policy and protest paths for `horizon` days starting at panel
    /// row `start`. Days past the end of the panel repeat its last values.
    pub fn from_panel(panel: &Panel, start: usize, horizon: usize) -> Result<Exogenous> {
        if panel.is_empty() || start > panel.len() {
            return Err(Error::Range(format!(
                "row {start} is outside a panel of {} days",
                panel.len()
            )));
        }
        let last = panel.len() - 1;
        let rows = (start..start + horizon).map(|t| &panel.records[t.min(last)]);
        let (policy, blm) = rows.map(|r| (r.policy, r.blm)).unzip();
        Ok(Exogenous {
            policy,
            blm,
            unemployment_shift: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.policy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policy.is_empty()
    }
}
